#pragma once
/**
 * Holder manager: tracks who holds each lock and detects the release of
 * the last holder, which starts the waiter hand-off.
 *
 * Two tracking modes share one interface. Identity tracking keeps the set
 * of holding clients; counter tracking keeps only their number (the
 * common atomic-counter simplification). Both report the same
 * StillHeld/LastHolder outcomes on valid operation sequences.
 */
#include <algorithm>
#include <cstdint>
#include <mutex>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "modlock/core_types.hpp"
#include "modlock/detail/striped_mutex.hpp"

namespace modlock {

enum class HolderTracking : std::uint8_t { Identity, Counter };

struct HolderRecord {
    LockId lock{};
    std::vector<ClientId> holders;  ///< Sorted by id; empty under counter tracking.
    std::uint32_t holder_count = 0;
    GrantCount last_grant_snapshot{};
    bool release_in_progress = false;
};

struct StillHeld {
    std::uint32_t remaining;
    friend bool operator==(StillHeld, StillHeld) = default;
};
struct LastHolder {
    GrantCount snapshot;
    friend bool operator==(LastHolder, LastHolder) = default;
};
using ReleaseOutcome = std::variant<StillHeld, LastHolder>;

class HolderManager {
public:
    HolderManager(std::size_t num_locks, HolderTracking tracking) : slots_(num_locks), tracking_(tracking) {
        for (std::size_t i = 0; i < num_locks; ++i) slots_[i].record.lock = LockId{static_cast<std::uint32_t>(i)};
    }

    HolderTracking tracking() const { return tracking_; }
    std::size_t num_locks() const { return slots_.size(); }

    void add_holders(LockId lock, std::span<const ClientId> clients, GrantCount grant_count) {
        std::scoped_lock guard(stripe(lock));
        Slot& s = at(lock);
        insert(s.record, clients);
        s.record.last_grant_snapshot = grant_count;
        // A grant racing an outstanding promotion is what a rollback returns to.
        if (s.saved_snapshot) s.saved_snapshot = grant_count;
    }

    ReleaseOutcome remove_holder(LockId lock, ClientId client) {
        std::scoped_lock guard(stripe(lock));
        Slot& s = at(lock);
        erase(s.record, std::span<const ClientId>(&client, 1));
        if (s.record.holder_count > 0) return StillHeld{s.record.holder_count};
        s.record.release_in_progress = true;
        s.saved_snapshot.reset();
        return LastHolder{s.record.last_grant_snapshot};
    }

    /// Records promoted waiters as (provisional) holders. `grant_count` is
    /// the counter value the mode manager reaches if the promotion commits.
    /// Holders added by racing grants during the release window are kept.
    void promote_waiters(LockId lock, std::span<const ClientId> clients, GrantCount grant_count) {
        std::scoped_lock guard(stripe(lock));
        Slot& s = at(lock);
        require_release(s);
        insert(s.record, clients);
        if (!s.saved_snapshot) s.saved_snapshot = s.record.last_grant_snapshot;
        s.record.last_grant_snapshot = grant_count;
    }

    void rollback_promotion(LockId lock, std::span<const ClientId> clients) {
        std::scoped_lock guard(stripe(lock));
        Slot& s = at(lock);
        require_release(s);
        erase(s.record, clients);
        if (s.saved_snapshot) s.record.last_grant_snapshot = *s.saved_snapshot;
        s.saved_snapshot.reset();
    }

    void finish_release(LockId lock) {
        std::scoped_lock guard(stripe(lock));
        Slot& s = at(lock);
        require_release(s);
        s.record.release_in_progress = false;
        s.saved_snapshot.reset();
    }

    bool release_in_progress(LockId lock) const {
        std::scoped_lock guard(stripe(lock));
        return at(lock).record.release_in_progress;
    }

    HolderRecord read_record(LockId lock) const {
        std::scoped_lock guard(stripe(lock));
        return at(lock).record;
    }

private:
    struct Slot {
        HolderRecord record;
        std::optional<GrantCount> saved_snapshot;
    };

    void insert(HolderRecord& r, std::span<const ClientId> clients) const {
        if (tracking_ == HolderTracking::Counter) {
            r.holder_count += static_cast<std::uint32_t>(clients.size());
            return;
        }
        for (ClientId c : clients) {
            auto it = std::lower_bound(r.holders.begin(), r.holders.end(), c);
            if (it != r.holders.end() && it->id == c.id)
                throw Error(Errc::DuplicateHolder, "client " + std::to_string(c.id) + " already holds lock " +
                                                       std::to_string(r.lock.value));
            r.holders.insert(it, c);
        }
        r.holder_count = static_cast<std::uint32_t>(r.holders.size());
    }

    void erase(HolderRecord& r, std::span<const ClientId> clients) const {
        if (tracking_ == HolderTracking::Counter) {
            if (clients.size() > r.holder_count)
                throw Error(Errc::NotHolder, "lock " + std::to_string(r.lock.value) + " has only " +
                                                 std::to_string(r.holder_count) + " holders");
            r.holder_count -= static_cast<std::uint32_t>(clients.size());
            return;
        }
        for (ClientId c : clients) {
            auto it = std::lower_bound(r.holders.begin(), r.holders.end(), c);
            if (it == r.holders.end() || it->id != c.id)
                throw Error(Errc::NotHolder, "client " + std::to_string(c.id) + " does not hold lock " +
                                                 std::to_string(r.lock.value));
            r.holders.erase(it);
        }
        r.holder_count = static_cast<std::uint32_t>(r.holders.size());
    }

    static void require_release(const Slot& s) {
        if (!s.record.release_in_progress)
            throw Error(Errc::NoReleaseInProgress, "lock " + std::to_string(s.record.lock.value));
    }

    std::mutex& stripe(LockId lock) const { return stripes_.for_index(lock.value); }
    void check(LockId lock) const {
        if (lock.value >= slots_.size()) throw Error(Errc::UnknownLock, "lock " + std::to_string(lock.value));
    }
    Slot& at(LockId lock) {
        check(lock);
        return slots_[lock.value];
    }
    const Slot& at(LockId lock) const {
        check(lock);
        return slots_[lock.value];
    }

    std::vector<Slot> slots_;
    HolderTracking tracking_;
    detail::StripedMutex stripes_;
};

}  // namespace modlock
