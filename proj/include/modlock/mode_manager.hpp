#pragma once
/**
 * Mode manager: owns the per-lock mode and the grant counter, decides
 * acquisitions and validates release-time mode updates.
 *
 * Release pipelines carry the grant count observed when the last holder
 * left. A mode update commits only if the counter still matches, i.e. no
 * acquisition was granted while the release was being processed.
 *
 * Besides the grant counter the manager counts Enqueue decisions. A reset
 * to Free additionally requires that the waiter manager has seen every
 * enqueued request; otherwise a waiter still in transit would be stranded
 * behind a Free lock.
 */
#include <cstdint>
#include <mutex>
#include <variant>
#include <vector>

#include "modlock/core_types.hpp"
#include "modlock/detail/striped_mutex.hpp"

namespace modlock {

struct ModeEntry {
    LockId lock{};
    LockMode mode = LockMode::Free;
    GrantCount grant_count{};
    std::uint64_t enqueued = 0;  ///< Enqueue decisions issued so far.
    friend bool operator==(const ModeEntry&, const ModeEntry&) = default;
};

struct Granted {
    GrantCount new_count;
    friend bool operator==(Granted, Granted) = default;
};
struct Enqueue {
    friend bool operator==(Enqueue, Enqueue) = default;
};
using AcquireDecision = std::variant<Granted, Enqueue>;

enum class ValidationResult : std::uint8_t {
    Updated,
    Aborted,
    /// Reset-to-free only: an Enqueue decision has not reached the waiter
    /// manager yet. The caller must select waiters again.
    Reselect,
};

/// Disabled turns every validation into an unconditional commit. Only used
/// to demonstrate that grant counting is what keeps the lock safe.
enum class GrantValidation : std::uint8_t { Enabled, Disabled };

class ModeManager {
public:
    explicit ModeManager(std::size_t num_locks, GrantValidation validation = GrantValidation::Enabled)
        : entries_(num_locks), validation_(validation) {
        for (std::size_t i = 0; i < num_locks; ++i) entries_[i].lock = LockId{static_cast<std::uint32_t>(i)};
    }

    std::size_t num_locks() const { return entries_.size(); }
    GrantValidation validation() const { return validation_; }

    AcquireDecision decide_acquire(LockId lock, AcquireMode requested) {
        std::scoped_lock guard(stripe(lock));
        ModeEntry& e = at(lock);
        if (!compatible(e.mode, requested)) {
            ++e.enqueued;
            return Enqueue{};
        }
        e.mode = to_lock_mode(requested);
        e.grant_count = e.grant_count + 1;
        return Granted{e.grant_count};
    }

    /// Commits `new_mode` if `expected` is still the current grant count.
    /// `increment_by` is the number of waiters being promoted (0 for a reset).
    ValidationResult validate_and_update(LockId lock, LockMode new_mode, GrantCount expected,
                                         std::uint64_t increment_by) {
        std::scoped_lock guard(stripe(lock));
        ModeEntry& e = at(lock);
        if (validation_ == GrantValidation::Enabled && e.grant_count != expected) return ValidationResult::Aborted;
        e.mode = new_mode;
        e.grant_count = e.grant_count + increment_by;
        return ValidationResult::Updated;
    }

    /// Reset to Free once the release pipeline found no waiters.
    /// `waiter_arrivals` is the waiter manager's enqueue tally at selection.
    ValidationResult reset_to_free(LockId lock, GrantCount expected, std::uint64_t waiter_arrivals) {
        std::scoped_lock guard(stripe(lock));
        ModeEntry& e = at(lock);
        if (validation_ == GrantValidation::Enabled) {
            if (e.grant_count != expected) return ValidationResult::Aborted;
            if (e.enqueued != waiter_arrivals) return ValidationResult::Reselect;
        }
        e.mode = LockMode::Free;
        return ValidationResult::Updated;
    }

    ModeEntry read_entry(LockId lock) const {
        std::scoped_lock guard(stripe(lock));
        return at(lock);
    }

private:
    std::mutex& stripe(LockId lock) const { return stripes_.for_index(lock.value); }

    void check(LockId lock) const {
        if (lock.value >= entries_.size())
            throw Error(Errc::UnknownLock, "lock " + std::to_string(lock.value) + " outside [0, " +
                                               std::to_string(entries_.size()) + ")");
    }
    ModeEntry& at(LockId lock) {
        check(lock);
        return entries_[lock.value];
    }
    const ModeEntry& at(LockId lock) const {
        check(lock);
        return entries_[lock.value];
    }

    std::vector<ModeEntry> entries_;
    GrantValidation validation_;
    detail::StripedMutex stripes_;
};

}  // namespace modlock
