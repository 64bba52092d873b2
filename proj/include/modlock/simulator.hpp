#pragma once
/**
 * Deterministic discrete-event simulator running closed-loop clients
 * against the protocol engine on a modelled topology.
 *
 * Events are ordered by (time, sequence number); sequence numbers are
 * assigned at scheduling, so a (config, seed) pair fixes every output.
 *
 * Message timing: each hop pays the sender's and receiver's communication
 * queues plus link latency; the destination then runs the step on its
 * earliest free thread. Messages between modules on the same component
 * are local calls with no network cost. A client packet that passes a
 * component hosting another module of the same lock is terminated there
 * (the relay pays the packet cost, the rest of the route is internal).
 */
#include <algorithm>
#include <cstdint>
#include <memory>
#include <optional>
#include <queue>
#include <variant>
#include <vector>

#include "modlock/assignment.hpp"
#include "modlock/hardware_model.hpp"
#include "modlock/history.hpp"
#include "modlock/protocol_engine.hpp"
#include "modlock/verifier.hpp"
#include "modlock/workload.hpp"

namespace modlock {

struct SimConfig {
    Topology topology;
    Assignment assignment;
    /// Optional second assignment serving locks [0, cached_locks).
    std::optional<Assignment> cache_assignment;
    std::uint32_t cached_locks = 0;
    HolderTracking holder_tracking = HolderTracking::Identity;
    NotificationMode notification = PushMode{};
    GrantValidation validation = GrantValidation::Enabled;
    FootprintParams footprint;
    std::uint64_t max_holders = 64;  ///< Footprint sizing only.
    std::uint64_t max_waiters = 64;  ///< Footprint sizing only.
    Workload workload;
    std::uint64_t max_events = 2'000'000'000;
    bool record_history = true;
    bool record_traces = false;
};

struct SimResult {
    ResourceLedger ledger;
    EngineStats engine;
    History history;
    std::vector<LockFinalState> final_state;
    std::vector<PipelineTrace> traces;
    std::vector<SimTime> acquire_latencies;
    std::uint64_t completed_ops = 0;
    std::uint64_t requests = 0;
    std::uint64_t cached_requests = 0;
    std::uint64_t polls = 0;
    std::uint64_t events = 0;
    SimTime makespan = 0;

    double throughput_ops_per_s() const {
        return makespan > 0 ? static_cast<double>(completed_ops) * static_cast<double>(kPicosPerSecond) /
                                  static_cast<double>(makespan)
                            : 0.0;
    }
};

/// Value at quantile q (nearest rank) of an unsorted sample.
inline SimTime percentile(std::vector<SimTime> v, double q) {
    if (v.empty()) return 0;
    std::sort(v.begin(), v.end());
    auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(v.size())));
    return v[std::clamp<std::size_t>(rank, 1, v.size()) - 1];
}

class Simulator {
public:
    explicit Simulator(SimConfig cfg) : cfg_(std::move(cfg)), hw_(cfg_.topology) {
        cfg_.workload.validate();
        if (!cfg_.workload.script.empty()) cfg_.workload.num_clients = static_cast<std::uint32_t>(cfg_.workload.script.size());
        for (ComponentId c : cfg_.workload.client_components) cfg_.topology.component(c);
        place_state();

        EngineConfig ec;
        ec.num_locks = cfg_.workload.num_locks;
        ec.num_components = cfg_.topology.size();
        ec.max_waiters = std::max<std::size_t>(cfg_.workload.num_clients, 1);
        ec.holder_tracking = cfg_.holder_tracking;
        ec.notification = cfg_.notification;
        ec.validation = cfg_.validation;
        ec.record_traces = cfg_.record_traces;
        Placement placement = cfg_.cache_assignment
                                  ? Placement(cfg_.assignment, *cfg_.cache_assignment, cfg_.cached_locks)
                                  : Placement(cfg_.assignment);
        engine_ = std::make_unique<ProtocolEngine>(ec, std::move(placement));

        const Workload& w = cfg_.workload;
        std::shared_ptr<const ZipfGenerator> zipf;
        if (const auto* z = std::get_if<Zipfian>(&w.distribution); z && z->theta > 0)
            zipf = std::make_shared<ZipfGenerator>(w.num_locks, z->theta);
        clients_.reserve(w.num_clients);
        for (std::uint32_t i = 0; i < w.num_clients; ++i) {
            ClientId id{i, w.client_components[i % w.client_components.size()]};
            clients_.push_back(Client{id, Rng(w.seed, i + 1), LockSampler(w, zipf)});
        }
    }

    SimResult run() {
        for (auto& c : clients_) schedule(first_start(), ClientTimer{c.id.id, TimerKind::Start});
        Outbox out;
        while (!events_.empty()) {
            if (++result_.events > cfg_.max_events)
                throw Error(Errc::NonQuiescent, "event budget of " + std::to_string(cfg_.max_events) + " exhausted");
            Event ev = std::move(const_cast<Event&>(events_.top()));
            events_.pop();
            now_ = ev.time;
            std::visit([&](auto& p) { handle(p, out); }, ev.payload);
        }
        if (engine_->open_pipelines() != 0)
            throw Error(Errc::NonQuiescent, std::to_string(engine_->open_pipelines()) + " pipelines still open");
        if (hw_.ledger().in_flight() != 0) throw Error(Errc::NonQuiescent, "messages still in flight");
        collect_final_state();
        result_.ledger = hw_.ledger();
        result_.engine = engine_->stats();
        result_.traces = engine_->take_traces();
        return std::move(result_);
    }

    const ProtocolEngine& engine() const { return *engine_; }

private:
    enum class TimerKind : std::uint8_t { Start, EndCriticalSection, Poll };

    struct ClientTimer {
        std::uint32_t client;
        TimerKind kind;
    };
    struct ModuleArrival {
        ModuleMessage msg;
        const std::vector<Hop>* route;
    };
    struct ClientArrival {
        ClientMessage msg;
        const std::vector<Hop>* route;
    };
    struct PollArrival {
        std::uint32_t client;
        RequestId request;
        const std::vector<Hop>* route;
    };
    struct PollReply {
        std::uint32_t client;
        RequestId request;
        PollResult result;
    };
    using Payload = std::variant<ClientTimer, ModuleArrival, ClientArrival, PollArrival, PollReply>;

    struct Event {
        SimTime time;
        std::uint64_t seq;
        Payload payload;
        bool operator>(const Event& o) const { return time != o.time ? time > o.time : seq > o.seq; }
    };

    enum class Phase : std::uint8_t { Idle, Acquiring, Holding, Done };

    struct Client {
        Client(ClientId i, Rng r, LockSampler s) : id(i), rng(std::move(r)), sampler(std::move(s)) {}
        ClientId id;
        Rng rng;
        LockSampler sampler;
        Phase phase = Phase::Idle;
        LockId lock{};
        AcquireMode mode = AcquireMode::Exclusive;
        RequestId request{};
        SimTime invoked = 0;
        SimTime hold = 0;
        std::uint32_t poll_attempt = 0;
        std::size_t script_pos = 0;
        bool start_pending = false;       ///< Next op chosen but not yet issued.
        bool start_timer = false;         ///< Next op waits for its scripted start time.
        std::vector<std::uint32_t> unacked;  ///< Locks with a release in flight.
    };

    void schedule(SimTime t, Payload p) { events_.push(Event{t, seq_++, std::move(p)}); }

    // Setup.

    void place_state() {
        const Workload& w = cfg_.workload;
        FootprintInputs in;
        in.max_holders = cfg_.max_holders;
        in.max_waiters = cfg_.max_waiters;
        in.num_clients = w.script.empty() ? w.num_clients : w.script.size();
        in.tracking = cfg_.holder_tracking;
        in.push = std::holds_alternative<PushMode>(cfg_.notification);
        std::uint32_t cached = cfg_.cache_assignment ? std::min(cfg_.cached_locks, w.num_locks) : 0;
        cfg_.cached_locks = cached;
        auto charge = [&](const Assignment& a, std::uint64_t locks) {
            if (locks == 0) return;
            in.num_locks = locks;
            auto bytes = assignment_footprints(a, in, cfg_.footprint);
            for (Module m : kAllModules) {
                try {
                    hw_.charge_memory(a.host(m), m, bytes[index_of(m)]);
                } catch (const Error& e) {
                    throw Error(Errc::InfeasibleAssignment, e.what());
                }
            }
        };
        charge(cfg_.assignment, w.num_locks - cached);
        if (cfg_.cache_assignment) charge(*cfg_.cache_assignment, cached);
        for (const auto& c : cfg_.topology.components()) {
            const auto& a = cfg_.assignment;
            if (a.hosts_any(c.component) || (cfg_.cache_assignment && cfg_.cache_assignment->hosts_any(c.component)))
                ws_.push_back(hw_.working_set(c.component));
            else
                ws_.push_back(0);
        }
    }

    SimTime first_start() const {
        const Workload& w = cfg_.workload;
        if (!w.script.empty()) return 0;
        return w.think_time;
    }

    // Routing.

    /// First component strictly inside `route` that hosts a module of
    /// `lock`, if any.
    std::optional<std::size_t> relay_index(const std::vector<Hop>& route, LockId lock) const {
        const Assignment& a = engine_->placement().for_lock(lock);
        for (std::size_t i = 0; i + 1 < route.size(); ++i)
            if (a.hosts_any(route[i].to)) return i;
        return std::nullopt;
    }

    /// Walks `route` from `t`; returns arrival at its end. Runs the relay
    /// step when `relay` is set.
    SimTime traverse(const std::vector<Hop>& route, SimTime t, std::optional<std::size_t> relay) {
        for (std::size_t i = 0; i < route.size(); ++i) {
            t += hw_.charge_message(route[i], t);
            if (relay && *relay == i) {
                ComponentId r = route[i].to;
                t = hw_.reserve_thread(r, t, hw_.charge_processing(r, OpKind::Relay, ws_[r.value]));
            }
        }
        return t;
    }

    bool sends_client_packet(PipelineStep s) const {
        return s == PipelineStep::ReplyViaGrant || s == PipelineStep::RemoveHolder ||
               (s == PipelineStep::NotifyGranted && engine_->push_mode());
    }

    void dispatch(Outbox& out) {
        for (const auto& m : out.to_modules) send_module(m);
        for (auto& m : out.to_clients) send_client(std::move(m));
        for (const auto& a : out.aborts) record(a.client.id, a.lock, HistoryKind::Abort);
        out.clear();
    }

    void send_module(const ModuleMessage& m) {
        const Placement& pl = engine_->placement();
        ComponentId dst = pl.host(m.target, m.lock);
        bool from_client = !m.from_module;
        ComponentId src = from_client ? m.client.location : pl.host(*m.from_module, m.lock);
        SimTime arrival = now_;
        const std::vector<Hop>* route = nullptr;
        std::optional<std::size_t> relay;
        if (from_client || src != dst) {
            route = &cfg_.topology.route(src, dst);
            if (from_client) relay = relay_index(*route, m.lock);
            arrival = traverse(*route, now_, relay);
        }
        int packets = from_client && !relay && !route->empty() ? 1 : 0;
        if (sends_client_packet(m.step)) {
            const auto& back = cfg_.topology.route(dst, m.client.location);
            if (!back.empty() && !relay_index(back, m.lock)) ++packets;
        }
        OpKind kind = packets == 0 ? OpKind::ModuleStep : packets == 1 ? OpKind::ClientStep : OpKind::ClientRoundTrip;
        SimTime done = hw_.reserve_thread(dst, arrival, hw_.charge_processing(dst, kind, ws_[dst.value]));
        schedule(done, ModuleArrival{m, route});
    }

    void send_client(ClientMessage m) {
        ComponentId src = engine_->placement().host(m.from, m.lock);
        const auto& route = cfg_.topology.route(src, m.target);
        SimTime arrival = traverse(route, now_, relay_index(route, m.lock));
        schedule(arrival, ClientArrival{std::move(m), &route});
    }

    void mark_received(const std::vector<Hop>* route) {
        if (!route) return;
        for (const Hop& h : *route) hw_.mark_received(h);
    }

    // Event handlers.

    void handle(ModuleArrival& a, Outbox& out) {
        mark_received(a.route);
        engine_->execute(a.msg, now_, out);
        dispatch(out);
    }

    void handle(ClientArrival& a, Outbox& out) {
        mark_received(a.route);
        for (const auto& n : a.msg.notices) {
            Client& c = clients_[n.client.id];
            switch (a.msg.kind) {
                case ClientMessageKind::AcquireReply:
                    if (c.phase != Phase::Acquiring || c.request != n.request) break;
                    if (n.outcome == GrantOutcome::Granted)
                        observe_grant(c);
                    else if (!engine_->push_mode())
                        schedule(now_ + poll_mode().delay(c.poll_attempt++), ClientTimer{c.id.id, TimerKind::Poll});
                    break;
                case ClientMessageKind::Granted:
                    if (c.phase == Phase::Acquiring && c.request == n.request) observe_grant(c);
                    break;
                case ClientMessageKind::ReleaseAck: release_acked(c, n.lock, out); break;
            }
        }
    }

    void handle(ClientTimer& t, Outbox& out) {
        Client& c = clients_[t.client];
        switch (t.kind) {
            case TimerKind::Start:
                c.start_timer = false;
                start_op(c, out);
                break;
            case TimerKind::EndCriticalSection: end_critical_section(c, out); break;
            case TimerKind::Poll: send_poll(c); break;
        }
    }

    void handle(PollArrival& p, Outbox&) {
        mark_received(p.route);
        ++result_.polls;
        Client& c = clients_[p.client];
        PollResult r = engine_->poll(c.id, p.request);
        SimTime back = 0;
        for (const Hop& h : cfg_.topology.route(grant_host(c.lock), c.id.location)) back += hw_.reply_latency(h);
        schedule(now_ + back, PollReply{p.client, p.request, r});
    }

    void handle(PollReply& p, Outbox&) {
        Client& c = clients_[p.client];
        if (c.phase != Phase::Acquiring || c.request != p.request) return;
        if (p.result == PollResult::Granted)
            observe_grant(c);
        else
            schedule(now_ + poll_mode().delay(c.poll_attempt++), ClientTimer{c.id.id, TimerKind::Poll});
    }

    // Client behaviour.

    const PollMode& poll_mode() const { return std::get<PollMode>(cfg_.notification); }
    ComponentId grant_host(LockId lock) const { return engine_->placement().host(Module::Grant, lock); }

    void record(std::uint32_t client, LockId lock, HistoryKind kind, AcquireMode mode = AcquireMode::Exclusive) {
        if (cfg_.record_history) result_.history.push_back({now_, client, lock, kind, mode});
    }

    bool choose_op(Client& c) {
        const Workload& w = cfg_.workload;
        if (!w.script.empty()) {
            const auto& ops = w.script[c.id.id];
            if (c.script_pos >= ops.size()) return false;
            const ScriptedOp& op = ops[c.script_pos++];
            c.lock = op.lock;
            c.mode = op.mode;
            c.hold = op.hold;
            return true;
        }
        if (issued_ >= w.total_ops) return false;
        ++issued_;
        c.lock = c.sampler.next(c.rng);
        c.mode = c.rng.bernoulli(w.shared_fraction) ? AcquireMode::Shared : AcquireMode::Exclusive;
        c.hold = w.critical_section_time;
        return true;
    }

    void start_op(Client& c, Outbox& out) {
        if (!c.start_pending) {
            if (!choose_op(c)) {
                c.phase = Phase::Done;
                return;
            }
            const Workload& w = cfg_.workload;
            if (!w.script.empty()) {
                SimTime at = w.script[c.id.id][c.script_pos - 1].start_at;
                if (at > now_) {
                    c.start_pending = true;
                    c.start_timer = true;
                    schedule(at, ClientTimer{c.id.id, TimerKind::Start});
                    return;
                }
            }
        }
        if (std::find(c.unacked.begin(), c.unacked.end(), c.lock.value) != c.unacked.end()) {
            c.start_pending = true;  // resumed by the release ack
            return;
        }
        c.start_pending = false;
        c.phase = Phase::Acquiring;
        c.request = RequestId{next_request_++};
        c.invoked = now_;
        c.poll_attempt = 0;
        ++result_.requests;
        if (engine_->placement().is_cached(c.lock)) ++result_.cached_requests;
        record(c.id.id, c.lock, HistoryKind::AcquireInvoke, c.mode);
        engine_->submit_acquire(c.id, c.lock, c.mode, c.request, out);
        dispatch(out);
    }

    void observe_grant(Client& c) {
        c.phase = Phase::Holding;
        record(c.id.id, c.lock, HistoryKind::AcquireGrantObserved);
        result_.acquire_latencies.push_back(now_ - c.invoked);
        schedule(now_ + c.hold, ClientTimer{c.id.id, TimerKind::EndCriticalSection});
    }

    void end_critical_section(Client& c, Outbox& out) {
        record(c.id.id, c.lock, HistoryKind::ReleaseInvoke);
        c.unacked.push_back(c.lock.value);
        c.phase = Phase::Idle;
        engine_->submit_release(c.id, c.lock, RequestId{next_request_++}, out);
        dispatch(out);
        SimTime next = now_ + (cfg_.workload.script.empty() ? cfg_.workload.think_time : 0);
        schedule(next, ClientTimer{c.id.id, TimerKind::Start});
    }

    void release_acked(Client& c, LockId lock, Outbox& out) {
        record(c.id.id, lock, HistoryKind::ReleaseReturn);
        ++result_.completed_ops;
        result_.makespan = std::max(result_.makespan, now_);
        std::erase(c.unacked, lock.value);
        if (c.start_pending && !c.start_timer && c.lock == lock && c.phase == Phase::Idle) start_op(c, out);
    }

    void send_poll(Client& c) {
        const auto& route = cfg_.topology.route(c.id.location, grant_host(c.lock));
        SimTime arrival = traverse(route, now_, std::nullopt);
        schedule(arrival, PollArrival{c.id.id, c.request, &route});
    }

    void collect_final_state() {
        const auto& mode = engine_->mode_manager();
        const auto& holder = engine_->holder_manager();
        const auto& waiter = engine_->waiter_manager();
        for (std::uint32_t l = 0; l < cfg_.workload.num_locks; ++l) {
            LockId id{l};
            auto e = mode.read_entry(id);
            auto h = holder.read_record(id).holder_count;
            auto q = waiter.read_queue(id).size();
            if (e.mode != LockMode::Free || h != 0 || q != 0) result_.final_state.push_back({id, e.mode, h, q});
        }
    }

    SimConfig cfg_;
    HardwareModel hw_;
    std::unique_ptr<ProtocolEngine> engine_;
    std::vector<Client> clients_;
    std::vector<std::uint64_t> ws_;
    std::priority_queue<Event, std::vector<Event>, std::greater<>> events_;
    std::uint64_t seq_ = 0;
    std::uint64_t issued_ = 0;
    std::uint64_t next_request_ = 1;
    SimTime now_ = 0;
    SimResult result_;
};

inline SimResult run_simulation(SimConfig cfg) { return Simulator(std::move(cfg)).run(); }

}  // namespace modlock
