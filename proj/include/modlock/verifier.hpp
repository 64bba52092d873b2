#pragma once
/**
 * Checks over recorded histories.
 *
 * A client holds a lock from the moment it observes the grant until it
 * invokes the release. Promotions that were rolled back never reach the
 * client and therefore never count as holding.
 */
#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "modlock/history.hpp"

namespace modlock {

namespace detail {

struct Cycle {
    std::uint32_t client;
    LockId lock;
    AcquireMode mode;
    SimTime invoke;
    std::optional<SimTime> granted;
    std::optional<SimTime> release_invoke;
    std::optional<SimTime> release_return;
};

/// Splits a history into acquire/release cycles per (client, lock),
/// rejecting out-of-order or out-of-protocol events.
inline std::vector<Cycle> cycles_of(const History& h) {
    std::vector<Cycle> cycles;
    std::unordered_map<std::uint64_t, std::size_t> open;  // (client, lock) -> index of the latest cycle
    SimTime last = std::numeric_limits<SimTime>::min();
    auto bad = [](const HistoryEvent& e, const char* why) {
        throw Error(Errc::MalformedHistory, std::string(why) + " at t=" + std::to_string(e.time) + " client " +
                                                std::to_string(e.client) + " lock " + std::to_string(e.lock.value));
    };
    for (const auto& e : h) {
        if (e.time < last) bad(e, "time goes backwards");
        last = e.time;
        std::uint64_t key = (static_cast<std::uint64_t>(e.client) << 32) | e.lock.value;
        auto it = open.find(key);
        Cycle* c = it == open.end() ? nullptr : &cycles[it->second];
        switch (e.kind) {
            case HistoryKind::AcquireInvoke:
                if (c && !c->release_return) bad(e, "acquire before previous cycle ended");
                open[key] = cycles.size();
                cycles.push_back({e.client, e.lock, e.mode, e.time, {}, {}, {}});
                break;
            case HistoryKind::AcquireGrantObserved:
                if (!c || c->granted) bad(e, "grant without pending acquire");
                c->granted = e.time;
                break;
            case HistoryKind::Abort:
                if (!c || c->granted) bad(e, "abort outside a pending acquire");
                break;
            case HistoryKind::ReleaseInvoke:
                if (!c || !c->granted || c->release_invoke) bad(e, "release of a lock not held");
                c->release_invoke = e.time;
                break;
            case HistoryKind::ReleaseReturn:
                if (!c || !c->release_invoke || c->release_return) bad(e, "release return without release");
                c->release_return = e.time;
                break;
        }
    }
    return cycles;
}

}  // namespace detail

struct CounterexampleWindow {
    LockId lock;
    std::uint32_t first_client;
    std::uint32_t second_client;
    SimTime start;
    SimTime end;
};

struct MutexCheck {
    std::optional<CounterexampleWindow> counterexample;
    bool ok() const { return !counterexample; }
};

inline MutexCheck check_mutual_exclusion(const History& h) {
    struct Interval {
        SimTime start, end;
        std::uint32_t client;
        AcquireMode mode;
    };
    std::map<std::uint32_t, std::vector<Interval>> by_lock;
    for (const auto& c : detail::cycles_of(h)) {
        if (!c.granted) continue;
        by_lock[c.lock.value].push_back(
            {*c.granted, c.release_invoke.value_or(std::numeric_limits<SimTime>::max()), c.client, c.mode});
    }
    std::optional<CounterexampleWindow> first;
    for (auto& [lock, iv] : by_lock) {
        std::sort(iv.begin(), iv.end(), [](const Interval& a, const Interval& b) {
            return a.start != b.start ? a.start < b.start : a.client < b.client;
        });
        std::vector<Interval> active;
        for (const auto& cur : iv) {
            std::erase_if(active, [&](const Interval& a) { return a.end <= cur.start; });
            for (const auto& a : active) {
                if (a.mode == AcquireMode::Shared && cur.mode == AcquireMode::Shared) continue;
                CounterexampleWindow w{LockId{lock}, a.client, cur.client, cur.start, std::min(a.end, cur.end)};
                if (!first || w.start < first->start) first = w;
                break;
            }
            active.push_back(cur);
        }
    }
    return {first};
}

struct LinearizabilityCheck {
    bool linearizable = false;
    std::size_t operations = 0;
    bool ok() const { return linearizable; }
};

/**
 * Searches for a sequential order of the operations that respects real
 * time and that a reader-writer lock accepts. Pending operations may take
 * effect or not. Exponential in the number of operations, hence bounded.
 */
inline LinearizabilityCheck check_linearizable(const History& h, std::size_t max_ops = 12) {
    struct Op {
        bool acquire;
        std::size_t cycle;
        std::uint32_t client;
        std::uint32_t lock;
        AcquireMode mode;
        SimTime invoke;
        std::optional<SimTime> response;
        int partner = -1;  // acquire <-> release of the same cycle
    };
    auto cycles = detail::cycles_of(h);
    std::vector<Op> ops;
    for (std::size_t i = 0; i < cycles.size(); ++i) {
        const auto& c = cycles[i];
        ops.push_back({true, i, c.client, c.lock.value, c.mode, c.invoke, c.granted});
        if (c.release_invoke) {
            ops.push_back({false, i, c.client, c.lock.value, c.mode, *c.release_invoke, c.release_return});
            ops[ops.size() - 1].partner = static_cast<int>(ops.size() - 2);
            ops[ops.size() - 2].partner = static_cast<int>(ops.size() - 1);
        }
    }
    if (ops.size() > max_ops)
        throw Error(Errc::TooLarge, std::to_string(ops.size()) + " operations exceed the bound of " +
                                        std::to_string(max_ops));
    if (ops.size() > 20) throw Error(Errc::TooLarge, "bound above 20 operations is not supported");

    const std::size_t n = ops.size();
    std::uint32_t required = 0;
    for (std::size_t i = 0; i < n; ++i)
        if (ops[i].response) required |= 1u << i;

    auto legal = [&](std::uint32_t done, std::size_t i) {
        const Op& o = ops[i];
        if (!o.acquire) return o.partner >= 0 && (done >> o.partner & 1u);
        for (std::size_t j = 0; j < n; ++j) {
            const Op& a = ops[j];
            if (!(done >> j & 1u) || !a.acquire || a.lock != o.lock) continue;
            bool released = a.partner >= 0 && (done >> a.partner & 1u);
            if (released) continue;
            if (o.mode == AcquireMode::Exclusive || a.mode == AcquireMode::Exclusive) return false;
        }
        return true;
    };
    auto minimal = [&](std::uint32_t done, std::size_t i) {
        for (std::size_t j = 0; j < n; ++j)
            if (j != i && !(done >> j & 1u) && ops[j].response && *ops[j].response < ops[i].invoke) return false;
        return true;
    };

    std::unordered_set<std::uint32_t> dead;
    std::vector<std::uint32_t> stack;
    auto search = [&](auto&& self, std::uint32_t done) -> bool {
        if ((done & required) == required) return true;
        if (dead.count(done)) return false;
        for (std::size_t i = 0; i < n; ++i) {
            if (done >> i & 1u) continue;
            if (!minimal(done, i) || !legal(done, i)) continue;
            if (self(self, done | (1u << i))) return true;
        }
        dead.insert(done);
        return false;
    };
    return {search(search, 0), n};
}

struct LockFinalState {
    LockId lock;
    LockMode mode;
    std::uint32_t holders;
    std::size_t waiters;
};

struct StuckRequest {
    std::uint32_t client;
    LockId lock;
    std::string reason;
};

struct LivenessCheck {
    std::vector<StuckRequest> stuck;
    bool ok() const { return stuck.empty(); }
};

inline LivenessCheck check_liveness(const History& h, const std::vector<LockFinalState>& final_state) {
    LivenessCheck r;
    for (const auto& c : detail::cycles_of(h))
        if (!c.granted) r.stuck.push_back({c.client, c.lock, "acquire never granted"});
    for (const auto& s : final_state) {
        if (s.waiters > 0)
            r.stuck.push_back({0, s.lock, std::to_string(s.waiters) + " waiters left in queue"});
        if ((s.mode == LockMode::Free) != (s.holders == 0))
            r.stuck.push_back({0, s.lock, std::string("mode ") + std::string(to_string(s.mode)) + " with " +
                                              std::to_string(s.holders) + " holders"});
    }
    return r;
}

}  // namespace modlock
