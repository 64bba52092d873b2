#include <gtest/gtest.h>

#include <random>
#include <set>
#include <thread>

#include "modlock/grant_manager.hpp"
#include "modlock/holder_manager.hpp"
#include "modlock/mode_manager.hpp"
#include "modlock/waiter_manager.hpp"

using namespace modlock;

namespace {

ClientId client(std::uint32_t id, std::uint32_t at = 0) { return ClientId{id, ComponentId{at}}; }

template <class F>
Errc error_of(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no error thrown";
    return Errc::Config;
}

}  // namespace

TEST(Compatible, TruthTable) {
    EXPECT_TRUE(compatible(LockMode::Free, AcquireMode::Exclusive));
    EXPECT_TRUE(compatible(LockMode::Free, AcquireMode::Shared));
    EXPECT_TRUE(compatible(LockMode::Shared, AcquireMode::Shared));
    EXPECT_FALSE(compatible(LockMode::Shared, AcquireMode::Exclusive));
    EXPECT_FALSE(compatible(LockMode::Exclusive, AcquireMode::Shared));
    EXPECT_FALSE(compatible(LockMode::Exclusive, AcquireMode::Exclusive));
    int yes = 0;
    for (auto c : {LockMode::Free, LockMode::Shared, LockMode::Exclusive})
        for (auto r : {AcquireMode::Shared, AcquireMode::Exclusive}) yes += compatible(c, r);
    EXPECT_EQ(yes, 3);
}

TEST(ModeManager, FirstGrantOnFreeLock) {
    ModeManager m(4);
    EXPECT_EQ(m.read_entry(LockId{0}).mode, LockMode::Free);
    EXPECT_EQ(m.read_entry(LockId{0}).grant_count, GrantCount{0});
    auto d = m.decide_acquire(LockId{0}, AcquireMode::Exclusive);
    ASSERT_TRUE(std::holds_alternative<Granted>(d));
    EXPECT_EQ(std::get<Granted>(d).new_count, GrantCount{1});
    EXPECT_EQ(m.read_entry(LockId{0}).mode, LockMode::Exclusive);
}

TEST(ModeManager, SharedGrantsIncrementCounter) {
    ModeManager m(1);
    for (int i = 0; i < 3; ++i) m.decide_acquire(LockId{0}, AcquireMode::Shared);
    auto d = m.decide_acquire(LockId{0}, AcquireMode::Shared);
    EXPECT_EQ(std::get<Granted>(d).new_count, GrantCount{4});
}

TEST(ModeManager, IncompatibleRequestEnqueuesWithoutCounting) {
    ModeManager m(1);
    m.decide_acquire(LockId{0}, AcquireMode::Exclusive);
    auto before = m.read_entry(LockId{0});
    EXPECT_TRUE(std::holds_alternative<Enqueue>(m.decide_acquire(LockId{0}, AcquireMode::Shared)));
    auto after = m.read_entry(LockId{0});
    EXPECT_EQ(after.grant_count, before.grant_count);
    EXPECT_EQ(after.mode, LockMode::Exclusive);
    EXPECT_EQ(after.enqueued, 1u);
}

TEST(ModeManager, ValidationCommitsOnMatchAndAbortsOnMismatch) {
    ModeManager m(1);
    for (int i = 0; i < 5; ++i) m.decide_acquire(LockId{0}, AcquireMode::Shared);
    EXPECT_EQ(m.validate_and_update(LockId{0}, LockMode::Exclusive, GrantCount{5}, 1), ValidationResult::Updated);
    EXPECT_EQ(m.read_entry(LockId{0}).grant_count, GrantCount{6});
    auto before = m.read_entry(LockId{0});
    EXPECT_EQ(m.validate_and_update(LockId{0}, LockMode::Shared, GrantCount{5}, 1), ValidationResult::Aborted);
    EXPECT_EQ(m.read_entry(LockId{0}), before);
}

TEST(ModeManager, ResetToFreeKeepsCounter) {
    ModeManager m(1);
    for (int i = 0; i < 7; ++i) m.decide_acquire(LockId{0}, AcquireMode::Shared);
    EXPECT_EQ(m.validate_and_update(LockId{0}, LockMode::Free, GrantCount{7}, 0), ValidationResult::Updated);
    EXPECT_EQ(m.read_entry(LockId{0}).mode, LockMode::Free);
    EXPECT_EQ(m.read_entry(LockId{0}).grant_count, GrantCount{7});
}

TEST(ModeManager, ResetToFreeWaitsForInFlightWaiters) {
    ModeManager m(1);
    m.decide_acquire(LockId{0}, AcquireMode::Exclusive);
    m.decide_acquire(LockId{0}, AcquireMode::Exclusive);  // enqueued, not yet at the waiter manager
    EXPECT_EQ(m.reset_to_free(LockId{0}, GrantCount{1}, 0), ValidationResult::Reselect);
    EXPECT_EQ(m.read_entry(LockId{0}).mode, LockMode::Exclusive);
    EXPECT_EQ(m.reset_to_free(LockId{0}, GrantCount{1}, 1), ValidationResult::Updated);
    EXPECT_EQ(m.reset_to_free(LockId{0}, GrantCount{0}, 1), ValidationResult::Aborted);
}

TEST(ModeManager, DisabledValidationAlwaysCommits) {
    ModeManager m(1, GrantValidation::Disabled);
    m.decide_acquire(LockId{0}, AcquireMode::Shared);
    EXPECT_EQ(m.validate_and_update(LockId{0}, LockMode::Exclusive, GrantCount{0}, 1), ValidationResult::Updated);
    EXPECT_EQ(m.reset_to_free(LockId{0}, GrantCount{0}, 0), ValidationResult::Updated);
}

TEST(ModeManager, UnknownLock) {
    ModeManager m(2);
    EXPECT_EQ(error_of([&] { m.decide_acquire(LockId{2}, AcquireMode::Shared); }), Errc::UnknownLock);
    EXPECT_EQ(error_of([&] { m.read_entry(LockId{9}); }), Errc::UnknownLock);
}

TEST(ModeManager, RandomOperationsKeepCounterMonotoneAndAccounted) {
    std::mt19937_64 rng(7);
    for (int round = 0; round < 200; ++round) {
        ModeManager m(3);
        std::array<std::uint64_t, 3> expected{};
        std::array<GrantCount, 3> last{};
        for (int i = 0; i < 100; ++i) {
            LockId l{static_cast<std::uint32_t>(rng() % 3)};
            auto before = m.read_entry(l);
            switch (rng() % 3) {
                case 0: {
                    auto req = rng() % 2 ? AcquireMode::Shared : AcquireMode::Exclusive;
                    auto d = m.decide_acquire(l, req);
                    EXPECT_EQ(std::holds_alternative<Granted>(d), compatible(before.mode, req));
                    if (std::holds_alternative<Granted>(d)) ++expected[l.value];
                    break;
                }
                case 1: {
                    GrantCount guess{before.grant_count.value - (rng() % 2 && before.grant_count.value ? 1 : 0)};
                    std::uint64_t inc = rng() % 3;
                    auto mode = static_cast<LockMode>(rng() % 3);
                    auto r = m.validate_and_update(l, mode, guess, inc);
                    if (r == ValidationResult::Updated)
                        expected[l.value] += inc;
                    else
                        EXPECT_EQ(m.read_entry(l), before);
                    break;
                }
                default: m.reset_to_free(l, before.grant_count, before.enqueued); break;
            }
            EXPECT_GE(m.read_entry(l).grant_count, last[l.value]);
            last[l.value] = m.read_entry(l).grant_count;
        }
        for (std::uint32_t l = 0; l < 3; ++l) EXPECT_EQ(m.read_entry(LockId{l}).grant_count.value, expected[l]);
    }
}

TEST(ModeManager, ConcurrentGrantsAreCountedExactly) {
    ModeManager m(8);
    std::vector<std::thread> threads;
    for (int t = 0; t < 4; ++t)
        threads.emplace_back([&] {
            for (int i = 0; i < 5000; ++i) m.decide_acquire(LockId{static_cast<std::uint32_t>(i % 8)}, AcquireMode::Shared);
        });
    for (auto& t : threads) t.join();
    for (std::uint32_t l = 0; l < 8; ++l) EXPECT_EQ(m.read_entry(LockId{l}).grant_count.value, 2500u);
}

TEST(HolderManager, AddAndRemove) {
    HolderManager h(1, HolderTracking::Identity);
    ClientId c1 = client(1), c2 = client(2);
    h.add_holders(LockId{0}, std::span(&c1, 1), GrantCount{1});
    EXPECT_EQ(h.read_record(LockId{0}).last_grant_snapshot, GrantCount{1});
    h.add_holders(LockId{0}, std::span(&c2, 1), GrantCount{4});
    auto r = h.read_record(LockId{0});
    EXPECT_EQ(r.holders, (std::vector<ClientId>{c1, c2}));
    EXPECT_EQ(r.last_grant_snapshot, GrantCount{4});
    EXPECT_EQ(error_of([&] { h.add_holders(LockId{0}, std::span(&c1, 1), GrantCount{5}); }), Errc::DuplicateHolder);

    EXPECT_EQ(h.remove_holder(LockId{0}, c1), ReleaseOutcome(StillHeld{1}));
    EXPECT_EQ(error_of([&] { h.remove_holder(LockId{0}, client(9)); }), Errc::NotHolder);
    EXPECT_EQ(h.remove_holder(LockId{0}, c2), ReleaseOutcome(LastHolder{GrantCount{4}}));
    EXPECT_TRUE(h.release_in_progress(LockId{0}));
}

TEST(HolderManager, PromoteRollbackFinish) {
    HolderManager h(1, HolderTracking::Identity);
    std::vector<ClientId> batch{client(3), client(4)};
    EXPECT_EQ(error_of([&] { h.promote_waiters(LockId{0}, batch, GrantCount{8}); }), Errc::NoReleaseInProgress);

    ClientId c2 = client(2);
    h.add_holders(LockId{0}, std::span(&c2, 1), GrantCount{6});
    h.remove_holder(LockId{0}, c2);
    h.promote_waiters(LockId{0}, batch, GrantCount{8});
    EXPECT_EQ(h.read_record(LockId{0}).holders, batch);
    EXPECT_EQ(h.read_record(LockId{0}).last_grant_snapshot, GrantCount{8});

    std::vector<ClientId> stranger{client(9)};
    EXPECT_EQ(error_of([&] { h.rollback_promotion(LockId{0}, stranger); }), Errc::NotHolder);
    h.rollback_promotion(LockId{0}, batch);
    EXPECT_TRUE(h.read_record(LockId{0}).holders.empty());
    EXPECT_EQ(h.read_record(LockId{0}).last_grant_snapshot, GrantCount{6});
    h.finish_release(LockId{0});
    EXPECT_FALSE(h.release_in_progress(LockId{0}));
    EXPECT_EQ(error_of([&] { h.finish_release(LockId{0}); }), Errc::NoReleaseInProgress);
}

TEST(HolderManager, RacingGrantKeepsItsSnapshotAcrossRollback) {
    HolderManager h(1, HolderTracking::Identity);
    ClientId c1 = client(1), c3 = client(3), c2 = client(2);
    h.add_holders(LockId{0}, std::span(&c1, 1), GrantCount{1});
    h.remove_holder(LockId{0}, c1);
    h.promote_waiters(LockId{0}, std::span(&c2, 1), GrantCount{2});
    h.add_holders(LockId{0}, std::span(&c3, 1), GrantCount{2});  // grant that raced the release
    h.rollback_promotion(LockId{0}, std::span(&c2, 1));
    h.finish_release(LockId{0});
    auto r = h.read_record(LockId{0});
    EXPECT_EQ(r.holders, std::vector<ClientId>{c3});
    EXPECT_EQ(r.last_grant_snapshot, GrantCount{2});
}

TEST(HolderManager, CounterTrackingMatchesIdentityTracking) {
    std::mt19937_64 rng(11);
    for (int round = 0; round < 300; ++round) {
        HolderManager a(1, HolderTracking::Identity), b(1, HolderTracking::Counter);
        std::set<std::uint32_t> held;
        std::uint64_t count = 0;
        for (int i = 0; i < 40; ++i) {
            bool release_open = a.release_in_progress(LockId{0});
            if (release_open) {
                a.finish_release(LockId{0});
                b.finish_release(LockId{0});
                continue;
            }
            if (held.empty() || rng() % 2) {
                std::uint32_t id = static_cast<std::uint32_t>(rng() % 16);
                if (held.count(id)) continue;
                held.insert(id);
                ClientId c = client(id);
                ++count;
                a.add_holders(LockId{0}, std::span(&c, 1), GrantCount{count});
                b.add_holders(LockId{0}, std::span(&c, 1), GrantCount{count});
            } else {
                auto it = held.begin();
                std::advance(it, static_cast<long>(rng() % held.size()));
                ClientId c = client(*it);
                held.erase(it);
                EXPECT_EQ(a.remove_holder(LockId{0}, c), b.remove_holder(LockId{0}, c));
            }
        }
    }
}

TEST(WaiterManager, EnqueueAndDuplicates) {
    WaiterManager w(1, 8);
    w.enqueue_waiter(LockId{0}, {client(3), AcquireMode::Exclusive, RequestId{1}, 0});
    w.enqueue_waiter(LockId{0}, {client(4), AcquireMode::Shared, RequestId{2}, 1});
    EXPECT_EQ(w.read_queue(LockId{0}).size(), 2u);
    EXPECT_EQ(error_of([&] { w.enqueue_waiter(LockId{0}, {client(4), AcquireMode::Shared, RequestId{2}, 2}); }),
              Errc::DuplicateWaiter);
    EXPECT_EQ(w.arrivals(LockId{0}), 2u);
}

TEST(WaiterManager, OverflowBeyondCapacity) {
    WaiterManager w(1, 1);
    w.enqueue_waiter(LockId{0}, {client(1), AcquireMode::Shared, RequestId{1}, 0});
    EXPECT_EQ(error_of([&] { w.enqueue_waiter(LockId{0}, {client(2), AcquireMode::Shared, RequestId{2}, 0}); }),
              Errc::WaiterOverflow);
}

TEST(WaiterManager, SharedPrefixBatch) {
    WaiterManager w(1, 8);
    w.enqueue_waiter(LockId{0}, {client(3), AcquireMode::Shared, RequestId{3}, 0});
    w.enqueue_waiter(LockId{0}, {client(4), AcquireMode::Shared, RequestId{4}, 1});
    w.enqueue_waiter(LockId{0}, {client(5), AcquireMode::Exclusive, RequestId{5}, 2});
    auto r = w.select_waiters(LockId{0}, GrantCount{7});
    const auto& s = std::get<Selection>(r);
    ASSERT_EQ(s.selected.size(), 2u);
    EXPECT_EQ(s.selected[0].client.id, 3u);
    EXPECT_EQ(s.selected[1].client.id, 4u);
    EXPECT_EQ(s.mode, LockMode::Shared);
    EXPECT_EQ(s.snapshot, GrantCount{7});
    ASSERT_EQ(w.read_queue(LockId{0}).size(), 1u);
    EXPECT_EQ(w.read_queue(LockId{0})[0].client.id, 5u);
}

TEST(WaiterManager, ExclusiveHeadSelectedAlone) {
    WaiterManager w(1, 8);
    w.enqueue_waiter(LockId{0}, {client(5), AcquireMode::Exclusive, RequestId{5}, 0});
    w.enqueue_waiter(LockId{0}, {client(6), AcquireMode::Shared, RequestId{6}, 1});
    auto s = std::get<Selection>(w.select_waiters(LockId{0}, GrantCount{1}));
    ASSERT_EQ(s.selected.size(), 1u);
    EXPECT_EQ(s.mode, LockMode::Exclusive);
    EXPECT_EQ(w.read_queue(LockId{0})[0].client.id, 6u);
}

TEST(WaiterManager, EmptyQueueReportsArrivals) {
    WaiterManager w(1, 8);
    EXPECT_EQ(w.select_waiters(LockId{0}, GrantCount{0}), SelectResult(NoWaiters{0}));
}

TEST(WaiterManager, RequeueFrontRestoresQueue) {
    std::mt19937_64 rng(3);
    for (int round = 0; round < 200; ++round) {
        WaiterManager w(1, 32);
        int n = 1 + static_cast<int>(rng() % 8);
        for (int i = 0; i < n; ++i)
            w.enqueue_waiter(LockId{0}, {client(static_cast<std::uint32_t>(i)),
                                         rng() % 2 ? AcquireMode::Shared : AcquireMode::Exclusive,
                                         RequestId{static_cast<std::uint64_t>(i)}, i});
        auto before = w.read_queue(LockId{0});
        auto s = std::get<Selection>(w.select_waiters(LockId{0}, GrantCount{1}));
        if (s.mode == LockMode::Exclusive) {
            EXPECT_EQ(s.selected.size(), 1u);
        } else {
            for (const auto& e : s.selected) EXPECT_EQ(e.requested, AcquireMode::Shared);
        }
        w.requeue_front(LockId{0}, s);
        EXPECT_EQ(w.read_queue(LockId{0}), before);
        EXPECT_EQ(error_of([&] { w.requeue_front(LockId{0}, s); }), Errc::DuplicateWaiter);
    }
}

TEST(WaiterManager, LocationsAreDistinct) {
    Selection s;
    s.selected = {{client(3, 1), AcquireMode::Shared, RequestId{1}, 0},
                  {client(4, 1), AcquireMode::Shared, RequestId{2}, 0},
                  {client(5, 2), AcquireMode::Shared, RequestId{3}, 0}};
    EXPECT_EQ(WaiterManager::waiter_locations(s), (std::vector<ComponentId>{ComponentId{1}, ComponentId{2}}));
    s.selected.resize(1);
    EXPECT_EQ(WaiterManager::waiter_locations(s), std::vector<ComponentId>{ComponentId{1}});
}

TEST(WaiterManager, FifoAmongExclusiveWaiters) {
    WaiterManager w(1, 16);
    for (std::uint32_t i = 0; i < 10; ++i)
        w.enqueue_waiter(LockId{0}, {client(i), AcquireMode::Exclusive, RequestId{i}, i});
    for (std::uint32_t i = 0; i < 10; ++i) {
        auto s = std::get<Selection>(w.select_waiters(LockId{0}, GrantCount{i}));
        EXPECT_EQ(s.selected.front().client.id, i);
    }
}

TEST(GrantManager, PushMessagesPerDistinctComponent) {
    GrantManager g(PushMode{}, 3);
    GrantNotice n{RequestId{1}, client(1, 1), LockId{0}, GrantOutcome::Granted};
    EXPECT_EQ(g.notify(n, {ComponentId{1}}).size(), 1u);
    EXPECT_EQ(g.notify(n, {ComponentId{1}, ComponentId{2}, ComponentId{1}}).size(), 2u);
    EXPECT_TRUE(g.notify(n, {}).empty());
    EXPECT_EQ(error_of([&] { g.notify(n, {ComponentId{3}}); }), Errc::UnknownComponent);
    EXPECT_EQ(error_of([&] { g.poll(client(1), RequestId{1}); }), Errc::WrongNotificationMode);
}

TEST(GrantManager, PollCountsEveryCall) {
    GrantManager g(PollMode{}, 1);
    GrantNotice q{RequestId{5}, client(1), LockId{0}, GrantOutcome::Queued};
    g.record_grant(q);
    EXPECT_EQ(g.poll(client(1), RequestId{5}), PollResult::Pending);
    EXPECT_EQ(g.poll_ops(), 1u);
    GrantNotice granted = q;
    granted.outcome = GrantOutcome::Granted;
    g.record_grant(granted);
    g.record_grant(granted);
    g.record_grant(q);
    EXPECT_EQ(g.poll(client(1), RequestId{5}), PollResult::Granted);
    EXPECT_EQ(g.poll_ops(), 2u);
    EXPECT_EQ(error_of([&] { g.poll(client(1), RequestId{6}); }), Errc::UnknownRequest);
    EXPECT_EQ(error_of([&] { g.notify(q, {ComponentId{0}}); }), Errc::WrongNotificationMode);
}

TEST(GrantManager, BackoffIsGeometricAndCapped) {
    PollMode p{from_micros(2.0), 2.0, from_micros(64.0)};
    EXPECT_EQ(p.delay(0), from_micros(2.0));
    EXPECT_EQ(p.delay(1), from_micros(4.0));
    EXPECT_EQ(p.delay(4), from_micros(32.0));
    EXPECT_EQ(p.delay(5), from_micros(64.0));
    EXPECT_EQ(p.delay(40), from_micros(64.0));
    PollMode flat{from_micros(0.5), 1.0, from_micros(0.5)};
    EXPECT_EQ(flat.delay(9), from_micros(0.5));
}
