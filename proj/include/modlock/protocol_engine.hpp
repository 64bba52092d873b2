#pragma once
/**
 * Protocol engine: runs the acquire and release pipelines over the four
 * managers as a sequence of step messages.
 *
 * The engine never moves messages itself. Every handler appends the
 * messages it sends to an Outbox; a driver (the simulator, or the
 * synchronous LockService below) delivers them to the hosting component
 * and calls execute() when they arrive.
 *
 * Ordering rules the engine relies on and enforces:
 *  - a release reaching the holder manager before the AddHolder of the
 *    same grant is parked until that AddHolder lands;
 *  - at most one release pipeline runs per lock; later releases of the
 *    same lock are parked until the running one finishes;
 *  - an aborted promotion is requeued before the release finishes, so the
 *    next pipeline sees the waiters again.
 */
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <utility>
#include <unordered_map>
#include <variant>
#include <vector>

#include "modlock/assignment.hpp"
#include "modlock/core_types.hpp"
#include "modlock/grant_manager.hpp"
#include "modlock/holder_manager.hpp"
#include "modlock/mode_manager.hpp"
#include "modlock/pipeline.hpp"
#include "modlock/waiter_manager.hpp"

namespace modlock {

/// Step message for a module. `from_module` is empty when the client of
/// the pipeline sent it.
struct ModuleMessage {
    PipelineStep step;
    RequestId pipeline;
    LockId lock;
    ClientId client;
    Module target;
    std::optional<Module> from_module;
};

enum class ClientMessageKind : std::uint8_t { AcquireReply, Granted, ReleaseAck };

/// One network message to the clients on `target`.
struct ClientMessage {
    ClientMessageKind kind;
    Module from;
    LockId lock;
    ComponentId target;
    std::vector<GrantNotice> notices;
};

/// A promoted waiter whose grant was rolled back.
struct AbortNote {
    ClientId client;
    LockId lock;
};

struct Outbox {
    std::vector<ModuleMessage> to_modules;
    std::vector<ClientMessage> to_clients;
    std::vector<AbortNote> aborts;

    bool empty() const { return to_modules.empty() && to_clients.empty() && aborts.empty(); }
    void clear() {
        to_modules.clear();
        to_clients.clear();
        aborts.clear();
    }
};

struct EngineConfig {
    std::size_t num_locks = 1;
    std::size_t num_components = 1;
    std::size_t max_waiters = 64;
    HolderTracking holder_tracking = HolderTracking::Identity;
    NotificationMode notification = PushMode{};
    GrantValidation validation = GrantValidation::Enabled;
    bool record_traces = false;
};

struct EngineStats {
    std::uint64_t acquires = 0;
    std::uint64_t direct_grants = 0;
    std::uint64_t promoted = 0;
    std::uint64_t aborted_promotions = 0;
    std::uint64_t aborted_resets = 0;
    std::uint64_t reselects = 0;
    std::uint64_t parked_releases = 0;
    std::uint64_t invalid_traces = 0;
    std::uint64_t completed_pipelines = 0;

    std::uint64_t aborted_validations() const { return aborted_promotions + aborted_resets; }
};

class ProtocolEngine {
public:
    ProtocolEngine(const EngineConfig& cfg, Placement placement)
        : cfg_(cfg),
          placement_(std::move(placement)),
          mode_(cfg.num_locks, cfg.validation),
          holder_(cfg.num_locks, cfg.holder_tracking),
          waiter_(cfg.num_locks, cfg.max_waiters),
          grant_(cfg.notification, cfg.num_components) {}

    const Placement& placement() const { return placement_; }
    const ModeManager& mode_manager() const { return mode_; }
    const HolderManager& holder_manager() const { return holder_; }
    const WaiterManager& waiter_manager() const { return waiter_; }
    const GrantManager& grant_manager() const { return grant_; }
    const EngineStats& stats() const { return stats_; }
    bool push_mode() const { return grant_.is_push(); }

    void submit_acquire(ClientId client, LockId lock, AcquireMode mode, RequestId request, Outbox& out) {
        check_lock(lock);
        Pipeline& p = open(request, client, lock);
        p.acquire = true;
        p.mode = mode;
        p.branches = 2;
        ++stats_.acquires;
        out.to_modules.push_back({PipelineStep::DecideAtMode, request, lock, client, Module::Mode, std::nullopt});
    }

    void submit_release(ClientId client, LockId lock, RequestId request, Outbox& out) {
        check_lock(lock);
        open(request, client, lock);
        out.to_modules.push_back({PipelineStep::RemoveHolder, request, lock, client, Module::Holder, std::nullopt});
    }

    /// A client's poll of the grant manager. Granted is reported once.
    PollResult poll(ClientId client, RequestId request) {
        PollResult r = grant_.poll(client, request);
        if (r == PollResult::Granted) grant_.forget(request);
        return r;
    }

    void execute(const ModuleMessage& m, SimTime now, Outbox& out) {
        auto it = pipelines_.find(m.pipeline.value);
        if (it == pipelines_.end()) throw Error(Errc::UnknownRequest, "pipeline " + std::to_string(m.pipeline.value));
        Pipeline& p = it->second;
        switch (m.step) {
            case PipelineStep::DecideAtMode: decide(p, now, out); break;
            case PipelineStep::ReplyViaGrant: reply(p, now, out); break;
            case PipelineStep::AddHolder: add_holder(p, now, out); break;
            case PipelineStep::EnqueueWaiter: enqueue(p, now); break;
            case PipelineStep::RemoveHolder: remove_holder(p, now, out); break;
            case PipelineStep::SelectWaiters: select(p, now, out); break;
            case PipelineStep::PromoteHolders: promote(p, now, out); break;
            case PipelineStep::ValidateMode: validate(p, now, out); break;
            case PipelineStep::NotifyGranted: notify(p, now, out); break;
            case PipelineStep::AbortRollback: abort_rollback(p, now, out); break;
            case PipelineStep::ResetToFree: reset(p, now, out); break;
            case PipelineStep::FinishRelease: finish(p, now, out); break;
        }
    }

    std::size_t open_pipelines() const { return pipelines_.size(); }
    const std::vector<PipelineTrace>& traces() const { return traces_; }
    std::vector<PipelineTrace> take_traces() { return std::exchange(traces_, {}); }

private:
    struct Pipeline {
        RequestId request;
        ClientId client;
        LockId lock;
        bool acquire = false;
        AcquireMode mode = AcquireMode::Exclusive;
        bool granted = false;
        GrantCount count{};
        std::uint64_t arrivals = 0;
        std::optional<Selection> selection;
        bool rolled_back = false;
        int branches = 1;
        std::vector<TraceEntry> trace;
    };

    static std::uint64_t key(LockId lock, ClientId client) {
        return (static_cast<std::uint64_t>(lock.value) << 32) | client.id;
    }

    void check_lock(LockId lock) const {
        if (lock.value >= cfg_.num_locks) throw Error(Errc::UnknownLock, "lock " + std::to_string(lock.value));
    }

    Pipeline& open(RequestId request, ClientId client, LockId lock) {
        auto [it, inserted] = pipelines_.try_emplace(request.value);
        if (!inserted) throw Error(Errc::DuplicateRequest, "request " + std::to_string(request.value));
        it->second.request = request;
        it->second.client = client;
        it->second.lock = lock;
        return it->second;
    }

    void record(Pipeline& p, PipelineStep step, Module at, SimTime now) {
        p.trace.push_back({step, placement_.host(at, p.lock), now});
    }

    void send(Pipeline& p, PipelineStep step, Module from, Module to, Outbox& out) {
        out.to_modules.push_back({step, p.request, p.lock, p.client, to, from});
    }

    void branch_done(Pipeline& p) {
        if (--p.branches > 0) return;
        complete(p);
    }

    void complete(Pipeline& p) {
        ++stats_.completed_pipelines;
        if (!is_valid_trace(steps_of(p))) ++stats_.invalid_traces;
        if (cfg_.record_traces) traces_.push_back({p.request, p.lock, std::move(p.trace)});
        pipelines_.erase(p.request.value);
    }

    static std::vector<PipelineStep> steps_of(const Pipeline& p) {
        std::vector<PipelineStep> s;
        s.reserve(p.trace.size());
        for (const auto& e : p.trace) s.push_back(e.step);
        return s;
    }

    // Acquisition.

    void decide(Pipeline& p, SimTime now, Outbox& out) {
        AcquireDecision d = mode_.decide_acquire(p.lock, p.mode);
        record(p, PipelineStep::DecideAtMode, Module::Mode, now);
        send(p, PipelineStep::ReplyViaGrant, Module::Mode, Module::Grant, out);
        if (const auto* g = std::get_if<Granted>(&d)) {
            p.granted = true;
            p.count = g->new_count;
            ++stats_.direct_grants;
            pending_adds_.emplace(key(p.lock, p.client), std::nullopt);
            send(p, PipelineStep::AddHolder, Module::Mode, Module::Holder, out);
        } else {
            send(p, PipelineStep::EnqueueWaiter, Module::Mode, Module::Waiter, out);
        }
    }

    void reply(Pipeline& p, SimTime now, Outbox& out) {
        record(p, PipelineStep::ReplyViaGrant, Module::Grant, now);
        GrantNotice n{p.request, p.client, p.lock, p.granted ? GrantOutcome::Granted : GrantOutcome::Queued};
        if (!p.granted && !grant_.is_push()) grant_.record_grant(n);
        out.to_clients.push_back({ClientMessageKind::AcquireReply, Module::Grant, p.lock, p.client.location, {n}});
        branch_done(p);
    }

    void add_holder(Pipeline& p, SimTime now, Outbox& out) {
        holder_.add_holders(p.lock, std::span<const ClientId>(&p.client, 1), p.count);
        record(p, PipelineStep::AddHolder, Module::Holder, now);
        std::optional<RequestId> parked;
        if (auto it = pending_adds_.find(key(p.lock, p.client)); it != pending_adds_.end()) {
            parked = it->second;
            pending_adds_.erase(it);
        }
        branch_done(p);
        if (parked) rerun_release(*parked, now, out);
    }

    void enqueue(Pipeline& p, SimTime now) {
        waiter_.enqueue_waiter(p.lock, WaiterEntry{p.client, p.mode, p.request, now});
        record(p, PipelineStep::EnqueueWaiter, Module::Waiter, now);
        branch_done(p);
    }

    // Release.

    void rerun_release(RequestId id, SimTime now, Outbox& out) {
        auto it = pipelines_.find(id.value);
        if (it != pipelines_.end()) remove_holder(it->second, now, out);
    }

    void remove_holder(Pipeline& p, SimTime now, Outbox& out) {
        if (auto it = pending_adds_.find(key(p.lock, p.client)); it != pending_adds_.end()) {
            it->second = p.request;
            ++stats_.parked_releases;
            return;
        }
        if (holder_.release_in_progress(p.lock)) {
            parked_[p.lock.value].push_back(p.request);
            ++stats_.parked_releases;
            return;
        }
        ReleaseOutcome r = holder_.remove_holder(p.lock, p.client);
        record(p, PipelineStep::RemoveHolder, Module::Holder, now);
        GrantNotice ack{p.request, p.client, p.lock, GrantOutcome::Granted};
        out.to_clients.push_back({ClientMessageKind::ReleaseAck, Module::Holder, p.lock, p.client.location, {ack}});
        if (std::holds_alternative<StillHeld>(r)) {
            complete(p);
            return;
        }
        p.count = std::get<LastHolder>(r).snapshot;
        send(p, PipelineStep::SelectWaiters, Module::Holder, Module::Waiter, out);
    }

    void select(Pipeline& p, SimTime now, Outbox& out) {
        SelectResult r = waiter_.select_waiters(p.lock, p.count);
        record(p, PipelineStep::SelectWaiters, Module::Waiter, now);
        if (auto* s = std::get_if<Selection>(&r)) {
            p.selection = std::move(*s);
            send(p, PipelineStep::PromoteHolders, Module::Waiter, Module::Holder, out);
        } else {
            p.arrivals = std::get<NoWaiters>(r).arrivals;
            send(p, PipelineStep::ResetToFree, Module::Waiter, Module::Mode, out);
        }
    }

    std::vector<ClientId> selected_clients(const Pipeline& p) const {
        std::vector<ClientId> c;
        c.reserve(p.selection->selected.size());
        for (const auto& e : p.selection->selected) c.push_back(e.client);
        return c;
    }

    void promote(Pipeline& p, SimTime now, Outbox& out) {
        auto clients = selected_clients(p);
        holder_.promote_waiters(p.lock, clients, p.count + clients.size());
        record(p, PipelineStep::PromoteHolders, Module::Holder, now);
        send(p, PipelineStep::ValidateMode, Module::Holder, Module::Mode, out);
    }

    void validate(Pipeline& p, SimTime now, Outbox& out) {
        const Selection& s = *p.selection;
        ValidationResult r = mode_.validate_and_update(p.lock, s.mode, p.count, s.selected.size());
        record(p, PipelineStep::ValidateMode, Module::Mode, now);
        if (r == ValidationResult::Updated) {
            stats_.promoted += s.selected.size();
            p.branches = 2;
            send(p, PipelineStep::NotifyGranted, Module::Mode, Module::Grant, out);
            send(p, PipelineStep::FinishRelease, Module::Mode, Module::Holder, out);
            return;
        }
        ++stats_.aborted_promotions;
        p.rolled_back = true;
        for (const auto& e : s.selected) out.aborts.push_back({e.client, p.lock});
        send(p, PipelineStep::AbortRollback, Module::Mode, Module::Waiter, out);
    }

    void notify(Pipeline& p, SimTime now, Outbox& out) {
        record(p, PipelineStep::NotifyGranted, Module::Grant, now);
        const Selection& s = *p.selection;
        if (grant_.is_push()) {
            for (ComponentId target : WaiterManager::waiter_locations(s)) {
                ClientMessage msg{ClientMessageKind::Granted, Module::Grant, p.lock, target, {}};
                for (const auto& e : s.selected)
                    if (e.client.location == target)
                        msg.notices.push_back({e.request, e.client, p.lock, GrantOutcome::Granted});
                grant_.notify(msg.notices.front(), {target});
                out.to_clients.push_back(std::move(msg));
            }
        } else {
            for (const auto& e : s.selected) grant_.record_grant({e.request, e.client, p.lock, GrantOutcome::Granted});
        }
        branch_done(p);
    }

    void abort_rollback(Pipeline& p, SimTime now, Outbox& out) {
        waiter_.requeue_front(p.lock, *p.selection);
        record(p, PipelineStep::AbortRollback, Module::Waiter, now);
        send(p, PipelineStep::FinishRelease, Module::Waiter, Module::Holder, out);
    }

    void reset(Pipeline& p, SimTime now, Outbox& out) {
        ValidationResult r = mode_.reset_to_free(p.lock, p.count, p.arrivals);
        record(p, PipelineStep::ResetToFree, Module::Mode, now);
        if (r == ValidationResult::Reselect) {
            ++stats_.reselects;
            send(p, PipelineStep::SelectWaiters, Module::Mode, Module::Waiter, out);
            return;
        }
        if (r == ValidationResult::Aborted) ++stats_.aborted_resets;
        send(p, PipelineStep::FinishRelease, Module::Mode, Module::Holder, out);
    }

    void finish(Pipeline& p, SimTime now, Outbox& out) {
        if (p.rolled_back) holder_.rollback_promotion(p.lock, selected_clients(p));
        holder_.finish_release(p.lock);
        record(p, PipelineStep::FinishRelease, Module::Holder, now);
        LockId lock = p.lock;
        branch_done(p);
        auto it = parked_.find(lock.value);
        if (it == parked_.end()) return;
        std::deque<RequestId> waiting = std::move(it->second);
        parked_.erase(it);
        for (RequestId r : waiting) rerun_release(r, now, out);
    }

    EngineConfig cfg_;
    Placement placement_;
    ModeManager mode_;
    HolderManager holder_;
    WaiterManager waiter_;
    GrantManager grant_;
    EngineStats stats_;
    std::unordered_map<std::uint64_t, Pipeline> pipelines_;
    /// Grants whose AddHolder is in flight, with a release parked behind it.
    std::unordered_map<std::uint64_t, std::optional<RequestId>> pending_adds_;
    std::unordered_map<std::uint32_t, std::deque<RequestId>> parked_;
    std::vector<PipelineTrace> traces_;
};

/// Notice delivered to a client by the synchronous service.
struct DeliveredNotice {
    ClientMessageKind kind;
    GrantNotice notice;
};

/**
 * Runs every pipeline to completion before returning, delivering messages
 * in FIFO order. Suitable for embedding the lock in one process and for
 * unit tests; races between pipelines need the simulator.
 */
class LockService {
public:
    explicit LockService(EngineConfig cfg, Placement placement = Placement(make_assignment({}, {}, {}, {})))
        : engine_(with_traces(cfg), std::move(placement)) {}

    PipelineTrace run_acquire(ClientId client, LockId lock, AcquireMode mode) {
        RequestId r{next_request_++};
        Outbox out;
        engine_.submit_acquire(client, lock, mode, r, out);
        drain(out);
        return trace_for(r);
    }

    PipelineTrace run_release(ClientId client, LockId lock) {
        RequestId r{next_request_++};
        Outbox out;
        engine_.submit_release(client, lock, r, out);
        drain(out);
        return trace_for(r);
    }

    ProtocolEngine& engine() { return engine_; }
    const std::vector<DeliveredNotice>& delivered() const { return delivered_; }

private:
    static EngineConfig with_traces(EngineConfig cfg) {
        cfg.record_traces = true;
        return cfg;
    }

    void drain(Outbox& first) {
        std::deque<ModuleMessage> queue(first.to_modules.begin(), first.to_modules.end());
        collect(first);
        Outbox out;
        while (!queue.empty()) {
            ModuleMessage m = queue.front();
            queue.pop_front();
            out.clear();
            engine_.execute(m, clock_++, out);
            queue.insert(queue.end(), out.to_modules.begin(), out.to_modules.end());
            collect(out);
        }
    }

    void collect(const Outbox& out) {
        for (const auto& m : out.to_clients)
            for (const auto& n : m.notices) delivered_.push_back({m.kind, n});
    }

    PipelineTrace trace_for(RequestId r) {
        for (auto& t : engine_.take_traces()) done_.push_back(std::move(t));
        for (auto it = done_.begin(); it != done_.end(); ++it) {
            if (it->request == r) {
                PipelineTrace t = std::move(*it);
                done_.erase(it);
                return t;
            }
        }
        throw Error(Errc::NonQuiescent, "pipeline " + std::to_string(r.value) + " did not complete");
    }

    ProtocolEngine engine_;
    std::uint64_t next_request_ = 1;
    SimTime clock_ = 0;
    std::vector<DeliveredNotice> delivered_;
    std::vector<PipelineTrace> done_;
};

}  // namespace modlock
