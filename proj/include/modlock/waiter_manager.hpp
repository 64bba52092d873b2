#pragma once
/**
 * Waiter manager: per-lock FIFO queues of blocked requests and the
 * selection of the next grantees when the last holder leaves.
 *
 * The selection rule is a policy type. FifoBatchPolicy picks the head
 * alone if it is exclusive, otherwise the maximal run of shared requests
 * at the head.
 */
#include <algorithm>
#include <cstdint>
#include <mutex>
#include <span>
#include <variant>
#include <vector>

#include "modlock/core_types.hpp"
#include "modlock/detail/striped_mutex.hpp"

namespace modlock {

struct WaiterEntry {
    ClientId client{};
    AcquireMode requested = AcquireMode::Exclusive;
    RequestId request{};
    SimTime enqueue_time = 0;
    friend bool operator==(const WaiterEntry&, const WaiterEntry&) = default;
};

struct Selection {
    std::vector<WaiterEntry> selected;
    LockMode mode = LockMode::Free;
    GrantCount snapshot{};
    friend bool operator==(const Selection&, const Selection&) = default;
};

/// No waiters were queued. `arrivals` is the number of enqueues this
/// manager has accepted for the lock, used to validate a reset to Free.
struct NoWaiters {
    std::uint64_t arrivals = 0;
    friend bool operator==(NoWaiters, NoWaiters) = default;
};

using SelectResult = std::variant<Selection, NoWaiters>;

struct FifoBatchPolicy {
    /// Number of entries taken from the head of a non-empty queue.
    static std::size_t take(std::span<const WaiterEntry> queue) {
        if (queue.front().requested == AcquireMode::Exclusive) return 1;
        auto it = std::find_if(queue.begin(), queue.end(),
                               [](const WaiterEntry& e) { return e.requested == AcquireMode::Exclusive; });
        return static_cast<std::size_t>(it - queue.begin());
    }
};

template <class Policy = FifoBatchPolicy>
class BasicWaiterManager {
public:
    BasicWaiterManager(std::size_t num_locks, std::size_t max_waiters_per_lock)
        : queues_(num_locks), arrivals_(num_locks, 0), max_waiters_(max_waiters_per_lock) {}

    std::size_t num_locks() const { return queues_.size(); }
    std::size_t max_waiters() const { return max_waiters_; }

    void enqueue_waiter(LockId lock, const WaiterEntry& entry) {
        std::scoped_lock guard(stripe(lock));
        auto& q = at(lock);
        reject_duplicate(lock, q, entry);
        if (q.size() >= max_waiters_)
            throw Error(Errc::WaiterOverflow,
                        "lock " + std::to_string(lock.value) + " already has " + std::to_string(q.size()) + " waiters");
        q.push_back(entry);
        ++arrivals_[lock.value];
    }

    SelectResult select_waiters(LockId lock, GrantCount snapshot) {
        std::scoped_lock guard(stripe(lock));
        auto& q = at(lock);
        if (q.empty()) return NoWaiters{arrivals_[lock.value]};
        std::size_t n = Policy::take(std::span<const WaiterEntry>(q));
        Selection s;
        s.selected.assign(q.begin(), q.begin() + static_cast<std::ptrdiff_t>(n));
        q.erase(q.begin(), q.begin() + static_cast<std::ptrdiff_t>(n));
        s.mode = to_lock_mode(s.selected.front().requested);
        s.snapshot = snapshot;
        return s;
    }

    void requeue_front(LockId lock, const Selection& selection) {
        std::scoped_lock guard(stripe(lock));
        auto& q = at(lock);
        for (const WaiterEntry& e : selection.selected) reject_duplicate(lock, q, e);
        q.insert(q.begin(), selection.selected.begin(), selection.selected.end());
    }

    /// Distinct components hosting the selected clients, ascending.
    static std::vector<ComponentId> waiter_locations(const Selection& selection) {
        std::vector<ComponentId> out;
        out.reserve(selection.selected.size());
        for (const WaiterEntry& e : selection.selected) out.push_back(e.client.location);
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
        return out;
    }

    std::vector<WaiterEntry> read_queue(LockId lock) const {
        std::scoped_lock guard(stripe(lock));
        return at(lock);
    }

    std::uint64_t arrivals(LockId lock) const {
        std::scoped_lock guard(stripe(lock));
        at(lock);
        return arrivals_[lock.value];
    }

private:
    static void reject_duplicate(LockId lock, const std::vector<WaiterEntry>& q, const WaiterEntry& e) {
        for (const WaiterEntry& w : q)
            if (w.client.id == e.client.id && w.request == e.request)
                throw Error(Errc::DuplicateWaiter, "client " + std::to_string(e.client.id) + " request " +
                                                       std::to_string(e.request.value) + " already waits on lock " +
                                                       std::to_string(lock.value));
    }

    std::mutex& stripe(LockId lock) const { return stripes_.for_index(lock.value); }
    void check(LockId lock) const {
        if (lock.value >= queues_.size()) throw Error(Errc::UnknownLock, "lock " + std::to_string(lock.value));
    }
    std::vector<WaiterEntry>& at(LockId lock) {
        check(lock);
        return queues_[lock.value];
    }
    const std::vector<WaiterEntry>& at(LockId lock) const {
        check(lock);
        return queues_[lock.value];
    }

    std::vector<std::vector<WaiterEntry>> queues_;
    std::vector<std::uint64_t> arrivals_;
    std::size_t max_waiters_;
    detail::StripedMutex stripes_;
};

using WaiterManager = BasicWaiterManager<>;

}  // namespace modlock
