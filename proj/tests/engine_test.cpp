#include <gtest/gtest.h>

#include "modlock/protocol_engine.hpp"

using namespace modlock;

namespace {

using S = PipelineStep;

ClientId client(std::uint32_t id, std::uint32_t at = 0) { return ClientId{id, ComponentId{at}}; }

EngineConfig config(std::size_t locks = 2) {
    EngineConfig c;
    c.num_locks = locks;
    c.num_components = 2;
    c.max_waiters = 16;
    return c;
}

}  // namespace

TEST(PipelineGraph, Edges) {
    EXPECT_TRUE(is_legal_transition(S::DecideAtMode, S::ReplyViaGrant));
    EXPECT_FALSE(is_legal_transition(S::EnqueueWaiter, S::AddHolder));
    EXPECT_TRUE(is_legal_transition(S::PromoteHolders, S::ValidateMode));
    EXPECT_TRUE(is_legal_transition(S::NotifyGranted, S::FinishRelease));
    EXPECT_TRUE(is_legal_transition(S::FinishRelease, S::NotifyGranted));
    EXPECT_FALSE(is_legal_transition(S::RemoveHolder, S::ValidateMode));
}

TEST(PipelineGraph, TraceShapes) {
    EXPECT_TRUE(is_valid_trace({S::DecideAtMode, S::ReplyViaGrant, S::AddHolder}));
    EXPECT_TRUE(is_valid_trace({S::DecideAtMode, S::AddHolder, S::ReplyViaGrant}));
    EXPECT_FALSE(is_valid_trace({S::DecideAtMode, S::EnqueueWaiter, S::ReplyViaGrant, S::AddHolder}));
    EXPECT_TRUE(is_valid_trace({S::RemoveHolder}));
    EXPECT_TRUE(is_valid_trace({S::RemoveHolder, S::SelectWaiters, S::ResetToFree, S::FinishRelease}));
    EXPECT_TRUE(is_valid_trace({S::RemoveHolder, S::SelectWaiters, S::ResetToFree, S::SelectWaiters,
                                S::PromoteHolders, S::ValidateMode, S::FinishRelease, S::NotifyGranted}));
    EXPECT_TRUE(is_valid_trace({S::RemoveHolder, S::SelectWaiters, S::PromoteHolders, S::ValidateMode,
                                S::AbortRollback, S::FinishRelease}));
    EXPECT_FALSE(is_valid_trace({S::RemoveHolder, S::SelectWaiters, S::PromoteHolders, S::ValidateMode,
                                 S::FinishRelease}));
    EXPECT_FALSE(is_valid_trace({S::SelectWaiters}));
    EXPECT_FALSE(is_valid_trace({}));
}

TEST(LockService, ExclusiveAcquireOnFreeLock) {
    LockService svc(config());
    auto t = svc.run_acquire(client(1), LockId{0}, AcquireMode::Exclusive);
    EXPECT_EQ(t.step_sequence(), (std::vector<S>{S::DecideAtMode, S::ReplyViaGrant, S::AddHolder}));
    auto& e = svc.engine();
    EXPECT_EQ(e.mode_manager().read_entry(LockId{0}).mode, LockMode::Exclusive);
    EXPECT_EQ(e.holder_manager().read_record(LockId{0}).holders, std::vector<ClientId>{client(1)});
    ASSERT_EQ(svc.delivered().size(), 1u);
    EXPECT_EQ(svc.delivered()[0].notice.outcome, GrantOutcome::Granted);
}

TEST(LockService, SharedAcquireOnExclusiveLockQueues) {
    LockService svc(config());
    svc.run_acquire(client(1), LockId{0}, AcquireMode::Exclusive);
    auto t = svc.run_acquire(client(2), LockId{0}, AcquireMode::Shared);
    EXPECT_EQ(t.step_sequence(), (std::vector<S>{S::DecideAtMode, S::ReplyViaGrant, S::EnqueueWaiter}));
    EXPECT_EQ(svc.delivered().back().notice.outcome, GrantOutcome::Queued);
    EXPECT_EQ(svc.engine().waiter_manager().read_queue(LockId{0}).size(), 1u);
}

TEST(LockService, SharedCoHolding) {
    LockService svc(config());
    svc.run_acquire(client(1), LockId{0}, AcquireMode::Shared);
    svc.run_acquire(client(2), LockId{0}, AcquireMode::Shared);
    EXPECT_EQ(svc.engine().holder_manager().read_record(LockId{0}).holders.size(), 2u);
    auto t = svc.run_release(client(1), LockId{0});
    EXPECT_EQ(t.step_sequence(), std::vector<S>{S::RemoveHolder});
}

TEST(LockService, ReleaseHandsOffToExclusiveWaiter) {
    LockService svc(config());
    svc.run_acquire(client(1), LockId{0}, AcquireMode::Exclusive);
    svc.run_acquire(client(2), LockId{0}, AcquireMode::Exclusive);
    auto t = svc.run_release(client(1), LockId{0});
    auto seq = t.step_sequence();
    EXPECT_EQ(seq, (std::vector<S>{S::RemoveHolder, S::SelectWaiters, S::PromoteHolders, S::ValidateMode,
                                   S::NotifyGranted, S::FinishRelease}));
    auto& e = svc.engine();
    EXPECT_EQ(e.mode_manager().read_entry(LockId{0}).mode, LockMode::Exclusive);
    EXPECT_EQ(e.mode_manager().read_entry(LockId{0}).grant_count, GrantCount{2});
    EXPECT_EQ(e.holder_manager().read_record(LockId{0}).holders, std::vector<ClientId>{client(2)});
    EXPECT_FALSE(e.holder_manager().release_in_progress(LockId{0}));
    bool notified = false;
    for (const auto& d : svc.delivered())
        notified |= d.kind == ClientMessageKind::Granted && d.notice.client == client(2);
    EXPECT_TRUE(notified);
}

TEST(LockService, LastReleaseWithoutWaitersFreesLock) {
    LockService svc(config());
    svc.run_acquire(client(1), LockId{1}, AcquireMode::Shared);
    auto t = svc.run_release(client(1), LockId{1});
    EXPECT_EQ(t.step_sequence(), (std::vector<S>{S::RemoveHolder, S::SelectWaiters, S::ResetToFree, S::FinishRelease}));
    EXPECT_EQ(svc.engine().mode_manager().read_entry(LockId{1}).mode, LockMode::Free);
    EXPECT_EQ(svc.engine().mode_manager().read_entry(LockId{1}).grant_count, GrantCount{1});
}

TEST(LockService, SharedBatchPromotion) {
    LockService svc(config());
    svc.run_acquire(client(1), LockId{0}, AcquireMode::Exclusive);
    svc.run_acquire(client(2), LockId{0}, AcquireMode::Shared);
    svc.run_acquire(client(3), LockId{0}, AcquireMode::Shared);
    svc.run_acquire(client(4), LockId{0}, AcquireMode::Exclusive);
    svc.run_release(client(1), LockId{0});
    auto& e = svc.engine();
    EXPECT_EQ(e.mode_manager().read_entry(LockId{0}).mode, LockMode::Shared);
    EXPECT_EQ(e.mode_manager().read_entry(LockId{0}).grant_count, GrantCount{3});
    EXPECT_EQ(e.holder_manager().read_record(LockId{0}).holders, (std::vector<ClientId>{client(2), client(3)}));
    svc.run_release(client(2), LockId{0});
    svc.run_release(client(3), LockId{0});
    EXPECT_EQ(e.holder_manager().read_record(LockId{0}).holders, std::vector<ClientId>{client(4)});
    EXPECT_EQ(e.mode_manager().read_entry(LockId{0}).mode, LockMode::Exclusive);
    svc.run_release(client(4), LockId{0});
    EXPECT_EQ(e.mode_manager().read_entry(LockId{0}).mode, LockMode::Free);
    EXPECT_EQ(e.stats().invalid_traces, 0u);
    // grant counter = direct grants + promotions
    EXPECT_EQ(e.mode_manager().read_entry(LockId{0}).grant_count.value, e.stats().direct_grants + e.stats().promoted);
}

TEST(LockService, ErrorsPropagate) {
    LockService svc(config());
    EXPECT_THROW(svc.run_release(client(1), LockId{0}), Error);
    EXPECT_THROW(svc.run_acquire(client(1), LockId{5}, AcquireMode::Shared), Error);
}

// Drives the engine by hand to interleave a grant between the snapshot at
// holder removal and the validation at the mode manager.
TEST(ProtocolEngine, RacingGrantAbortsPromotion) {
    ProtocolEngine e(config(), Placement(make_assignment({}, {}, {}, {})));
    Outbox out;
    auto run = [&](ModuleMessage m) {
        out.clear();
        e.execute(m, 0, out);
        return out.to_modules;
    };
    auto drain = [&](std::vector<ModuleMessage> msgs) {
        while (!msgs.empty()) {
            auto m = msgs.front();
            msgs.erase(msgs.begin());
            auto next = run(m);
            msgs.insert(msgs.end(), next.begin(), next.end());
        }
    };

    Outbox o;
    e.submit_acquire(client(1), LockId{0}, AcquireMode::Shared, RequestId{1}, o);
    drain(o.to_modules);
    o.clear();
    e.submit_acquire(client(2), LockId{0}, AcquireMode::Exclusive, RequestId{2}, o);
    drain(o.to_modules);
    o.clear();

    // C1 releases; stop before validation.
    e.submit_release(client(1), LockId{0}, RequestId{3}, o);
    auto msgs = run(o.to_modules.front());                 // RemoveHolder -> SelectWaiters
    msgs = run(msgs.front());                              // SelectWaiters -> PromoteHolders
    msgs = run(msgs.front());                              // PromoteHolders -> ValidateMode
    ASSERT_EQ(msgs.front().step, S::ValidateMode);
    auto validate = msgs.front();
    EXPECT_EQ(e.waiter_manager().read_queue(LockId{0}).size(), 0u);

    // C3's shared acquisition is decided while the release is in flight.
    o.clear();
    e.submit_acquire(client(3), LockId{0}, AcquireMode::Shared, RequestId{4}, o);
    drain(o.to_modules);
    EXPECT_EQ(e.mode_manager().read_entry(LockId{0}).grant_count, GrantCount{2});

    out.clear();
    e.execute(validate, 0, out);
    EXPECT_EQ(e.stats().aborted_promotions, 1u);
    ASSERT_EQ(out.aborts.size(), 1u);
    EXPECT_EQ(out.aborts[0].client, client(2));
    drain(out.to_modules);

    EXPECT_EQ(e.mode_manager().read_entry(LockId{0}).mode, LockMode::Shared);
    EXPECT_EQ(e.holder_manager().read_record(LockId{0}).holders, std::vector<ClientId>{client(3)});
    auto q = e.waiter_manager().read_queue(LockId{0});
    ASSERT_EQ(q.size(), 1u);
    EXPECT_EQ(q[0].client, client(2));
    EXPECT_FALSE(e.holder_manager().release_in_progress(LockId{0}));

    // C3 leaves; C2 finally gets the lock.
    o.clear();
    e.submit_release(client(3), LockId{0}, RequestId{5}, o);
    drain(o.to_modules);
    EXPECT_EQ(e.holder_manager().read_record(LockId{0}).holders, std::vector<ClientId>{client(2)});
    EXPECT_EQ(e.mode_manager().read_entry(LockId{0}).mode, LockMode::Exclusive);
    EXPECT_EQ(e.stats().invalid_traces, 0u);
    EXPECT_EQ(e.open_pipelines(), 0u);
}

TEST(ProtocolEngine, ReleaseParksUntilAddHolderLands) {
    ProtocolEngine e(config(), Placement(make_assignment({}, {}, {}, {})));
    Outbox o;
    e.submit_acquire(client(1), LockId{0}, AcquireMode::Exclusive, RequestId{1}, o);
    Outbox a;
    e.execute(o.to_modules[0], 0, a);  // decide; AddHolder still in flight
    ModuleMessage add = a.to_modules[1];
    ASSERT_EQ(add.step, S::AddHolder);
    Outbox r;
    e.submit_release(client(1), LockId{0}, RequestId{2}, r);
    Outbox x;
    e.execute(r.to_modules[0], 0, x);
    EXPECT_TRUE(x.empty());
    EXPECT_EQ(e.stats().parked_releases, 1u);
    e.execute(add, 0, x);
    // AddHolder ran and the parked release followed it.
    ASSERT_FALSE(x.to_modules.empty());
    EXPECT_EQ(x.to_modules[0].step, S::SelectWaiters);
}
