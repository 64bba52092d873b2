#pragma once
/**
 * Hardware model: components with processing, memory and communication
 * resources, the links between them, and the accounting that charges lock
 * module activity against those resources.
 *
 * Processing is a pool of `parallelism` identical threads per component.
 * A step costs proc_cost_per_op, doubled (or scaled by the miss
 * multiplier) when the per-thread share of resident lock state exceeds
 * the per-thread fast memory, plus packet_cost for every client packet
 * the step sends or receives.
 *
 * Communication is a FIFO token bucket per component: each message
 * endpoint occupies the component's network for 1/comm_ops_budget
 * seconds, so a component driven above its budget delays messages.
 */
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <queue>
#include <string>
#include <vector>

#include "modlock/assignment.hpp"
#include "modlock/core_types.hpp"
#include "modlock/holder_manager.hpp"

namespace modlock {

enum class ComponentKind : std::uint8_t { ServerCPU, SmartNIC, Switch, ComputeNode, MemoryNode };
enum class Resource : std::uint8_t { Processing, Memory, Communication };

constexpr std::string_view to_string(ComponentKind k) {
    switch (k) {
        case ComponentKind::ServerCPU: return "ServerCPU";
        case ComponentKind::SmartNIC: return "SmartNIC";
        case ComponentKind::Switch: return "Switch";
        case ComponentKind::ComputeNode: return "ComputeNode";
        case ComponentKind::MemoryNode: return "MemoryNode";
    }
    return "?";
}

constexpr std::string_view to_string(Resource r) {
    switch (r) {
        case Resource::Processing: return "processing";
        case Resource::Memory: return "memory";
        case Resource::Communication: return "communication";
    }
    return "?";
}

/// Scarce resources assumed for a kind when a profile does not list its own.
inline std::vector<Resource> default_scarce(ComponentKind k) {
    switch (k) {
        case ComponentKind::ServerCPU: return {Resource::Processing};
        case ComponentKind::SmartNIC: return {Resource::Memory};
        case ComponentKind::Switch: return {Resource::Memory};
        case ComponentKind::ComputeNode: return {Resource::Memory};
        case ComponentKind::MemoryNode: return {Resource::Processing, Resource::Communication};
    }
    return {};
}

struct HardwareProfile {
    ComponentId component{};
    std::string name;
    ComponentKind kind = ComponentKind::ServerCPU;
    SimTime proc_cost_per_op = from_micros(0.1);
    SimTime packet_cost = 0;
    std::uint32_t parallelism = 1;
    std::uint64_t memory_capacity = std::uint64_t{1} << 34;
    std::uint64_t fast_memory_capacity = std::uint64_t{1} << 20;  ///< Per thread.
    double miss_penalty_multiplier = 2.0;
    double comm_ops_budget = 0;  ///< Operations per second; 0 means unlimited.
    std::vector<Resource> scarce;
    bool placeable = true;

    bool is_scarce(Resource r) const { return std::find(scarce.begin(), scarce.end(), r) != scarce.end(); }
};

struct LinkProfile {
    ComponentId a{};
    ComponentId b{};
    SimTime latency = 0;
    std::uint32_t per_message_cost = 1;
};

/// One traversal of a link in a given direction.
struct Hop {
    std::size_t link;
    ComponentId from;
    ComponentId to;
};

class Topology {
public:
    Topology() = default;
    Topology(std::vector<HardwareProfile> components, std::vector<LinkProfile> links)
        : components_(std::move(components)), links_(std::move(links)) {
        for (std::size_t i = 0; i < components_.size(); ++i) {
            components_[i].component = ComponentId{static_cast<std::uint32_t>(i)};
            validate(components_[i]);
        }
        for (const auto& l : links_) {
            check(l.a);
            check(l.b);
            if (l.latency < 0) throw Error(Errc::Config, "negative link latency");
        }
        compute_routes();
    }

    std::size_t size() const { return components_.size(); }
    const std::vector<HardwareProfile>& components() const { return components_; }
    const std::vector<LinkProfile>& links() const { return links_; }
    const HardwareProfile& component(ComponentId c) const {
        check(c);
        return components_[c.value];
    }

    std::optional<ComponentId> find(const std::string& name) const {
        for (const auto& c : components_)
            if (c.name == name) return c.component;
        return std::nullopt;
    }

    std::optional<std::size_t> find_link(ComponentId a, ComponentId b) const {
        for (std::size_t i = 0; i < links_.size(); ++i)
            if ((links_[i].a == a && links_[i].b == b) || (links_[i].a == b && links_[i].b == a)) return i;
        return std::nullopt;
    }

    /// Shortest path by latency. From a component to itself the route is
    /// the self link if one exists, otherwise empty (a local call).
    const std::vector<Hop>& route(ComponentId from, ComponentId to) const {
        check(from);
        check(to);
        const auto& r = routes_[from.value * size() + to.value];
        if (!r) throw Error(Errc::UnknownLink, "no route from " + component(from).name + " to " + component(to).name);
        return *r;
    }

    SimTime route_latency(ComponentId from, ComponentId to) const {
        SimTime t = 0;
        for (const Hop& h : route(from, to)) t += links_[h.link].latency;
        return t;
    }

private:
    static void validate(const HardwareProfile& p) {
        auto bad = [&](const char* what) { throw Error(Errc::Config, "component " + p.name + ": " + what); };
        if (p.proc_cost_per_op < 0 || p.packet_cost < 0) bad("negative cost");
        if (p.parallelism == 0) bad("parallelism must be positive");
        if (p.fast_memory_capacity > p.memory_capacity) bad("fast memory exceeds memory capacity");
        if (p.miss_penalty_multiplier < 1.0) bad("miss penalty multiplier below 1");
        if (p.comm_ops_budget < 0) bad("negative communication budget");
    }

    void check(ComponentId c) const {
        if (c.value >= components_.size()) throw Error(Errc::UnknownComponent, "component " + std::to_string(c.value));
    }

    void compute_routes() {
        std::size_t n = size();
        routes_.assign(n * n, std::nullopt);
        constexpr SimTime inf = std::numeric_limits<SimTime>::max();
        for (std::size_t s = 0; s < n; ++s) {
            // Dijkstra; ties resolved by lower component index for determinism.
            std::vector<SimTime> dist(n, inf);
            std::vector<std::optional<Hop>> via(n);
            std::vector<bool> done(n, false);
            dist[s] = 0;
            for (std::size_t iter = 0; iter < n; ++iter) {
                std::size_t u = n;
                for (std::size_t i = 0; i < n; ++i)
                    if (!done[i] && dist[i] != inf && (u == n || dist[i] < dist[u])) u = i;
                if (u == n) break;
                done[u] = true;
                for (std::size_t li = 0; li < links_.size(); ++li) {
                    const auto& l = links_[li];
                    if (l.a == l.b) continue;
                    std::size_t v;
                    if (l.a.value == u)
                        v = l.b.value;
                    else if (l.b.value == u)
                        v = l.a.value;
                    else
                        continue;
                    SimTime d = dist[u] + l.latency;
                    if (d < dist[v]) {
                        dist[v] = d;
                        via[v] = Hop{li, ComponentId{static_cast<std::uint32_t>(u)}, ComponentId{static_cast<std::uint32_t>(v)}};
                    }
                }
            }
            for (std::size_t t = 0; t < n; ++t) {
                std::vector<Hop> path;
                if (t == s) {
                    if (auto self = find_link(ComponentId{static_cast<std::uint32_t>(s)}, ComponentId{static_cast<std::uint32_t>(s)}))
                        path.push_back({*self, ComponentId{static_cast<std::uint32_t>(s)}, ComponentId{static_cast<std::uint32_t>(s)}});
                    routes_[s * n + t] = std::move(path);
                    continue;
                }
                if (dist[t] == inf) continue;
                for (std::size_t v = t; v != s; v = via[v]->from.value) path.push_back(*via[v]);
                std::reverse(path.begin(), path.end());
                routes_[s * n + t] = std::move(path);
            }
        }
    }

    std::vector<HardwareProfile> components_;
    std::vector<LinkProfile> links_;
    std::vector<std::optional<std::vector<Hop>>> routes_;
};

// Memory footprints of module state.

struct FootprintParams {
    double mode_bits = 2;
    std::uint64_t grant_counter_bytes = 8;
    bool packed_modes = false;
    std::uint64_t holder_counter_bytes = 8;
    std::uint64_t holder_entry_bytes = 16;
    std::uint64_t waiter_entry_bytes = 24;
    std::uint64_t grant_push_bytes = 256;
    std::uint64_t grant_poll_bytes_per_client = 8;
};

struct FootprintInputs {
    std::uint64_t num_locks = 1;
    std::uint64_t max_holders = 64;
    std::uint64_t max_waiters = 64;
    std::uint64_t num_clients = 64;
    HolderTracking tracking = HolderTracking::Identity;
    bool push = true;
};

inline std::uint64_t mode_footprint(const FootprintInputs& in, const FootprintParams& p) {
    if (p.packed_modes)
        return static_cast<std::uint64_t>(std::ceil(static_cast<double>(in.num_locks) * p.mode_bits / 8.0)) +
               in.num_locks * p.grant_counter_bytes;
    auto mode_bytes = static_cast<std::uint64_t>(std::ceil(p.mode_bits / 8.0));
    return in.num_locks * (mode_bytes + p.grant_counter_bytes);
}

inline std::uint64_t holder_footprint(const FootprintInputs& in, const FootprintParams& p) {
    return in.num_locks *
           (in.tracking == HolderTracking::Counter ? p.holder_counter_bytes : p.holder_entry_bytes * in.max_holders);
}

inline std::uint64_t waiter_footprint(const FootprintInputs& in, const FootprintParams& p) {
    return in.num_locks * p.waiter_entry_bytes * in.max_waiters;
}

inline std::uint64_t grant_footprint(const FootprintInputs& in, const FootprintParams& p) {
    return in.push ? p.grant_push_bytes : p.grant_poll_bytes_per_client * in.num_clients;
}

inline std::uint64_t module_footprint(Module m, const FootprintInputs& in, const FootprintParams& p) {
    switch (m) {
        case Module::Mode: return mode_footprint(in, p);
        case Module::Holder: return holder_footprint(in, p);
        case Module::Waiter: return waiter_footprint(in, p);
        case Module::Grant: return grant_footprint(in, p);
    }
    return 0;
}

/// Bytes each module of `a` places on its host. Fused holder and waiter
/// state is one shared queue at half the combined size.
inline std::array<std::uint64_t, 4> assignment_footprints(const Assignment& a, const FootprintInputs& in,
                                                         const FootprintParams& p) {
    std::array<std::uint64_t, 4> out{};
    for (Module m : kAllModules) out[index_of(m)] = module_footprint(m, in, p);
    if (holder_waiter_fused(a)) {
        out[index_of(Module::Holder)] /= 2;
        out[index_of(Module::Waiter)] /= 2;
    }
    return out;
}

// Runtime accounting.

enum class OpKind : std::uint8_t {
    ModuleStep,       ///< Work on module state only.
    ClientStep,       ///< Module work plus one client packet.
    ClientRoundTrip,  ///< Module work plus a received and a sent client packet.
    Relay,            ///< Forwarding a client packet for a module downstream.
};

struct ResourceLedger {
    std::vector<std::uint64_t> proc_ops;
    std::vector<std::uint64_t> comm_ops;
    std::vector<std::uint64_t> resident_bytes;
    std::vector<std::uint64_t> peak_bytes;
    std::vector<std::uint64_t> link_sent;
    std::vector<std::uint64_t> link_received;

    std::uint64_t in_flight() const {
        std::uint64_t s = 0;
        for (std::size_t i = 0; i < link_sent.size(); ++i) s += link_sent[i] - link_received[i];
        return s;
    }
};

class HardwareModel {
public:
    explicit HardwareModel(const Topology& topo) : topo_(&topo) {
        std::size_t n = topo.size();
        ledger_.proc_ops.assign(n, 0);
        ledger_.comm_ops.assign(n, 0);
        ledger_.resident_bytes.assign(n, 0);
        ledger_.peak_bytes.assign(n, 0);
        ledger_.link_sent.assign(topo.links().size(), 0);
        ledger_.link_received.assign(topo.links().size(), 0);
        comm_busy_.assign(n, 0);
        comm_interval_.assign(n, 0);
        threads_.resize(n);
        for (const auto& c : topo.components()) {
            if (c.comm_ops_budget > 0)
                comm_interval_[c.component.value] =
                    static_cast<SimTime>(std::llround(static_cast<double>(kPicosPerSecond) / c.comm_ops_budget));
            threads_[c.component.value] = ThreadPool(std::greater<>{}, std::vector<SimTime>(c.parallelism, 0));
        }
    }

    const Topology& topology() const { return *topo_; }
    const ResourceLedger& ledger() const { return ledger_; }

    /// Cost of one operation; tallies it.
    SimTime charge_processing(ComponentId c, OpKind kind, std::uint64_t working_set) {
        const auto& p = topo_->component(c);
        ++ledger_.proc_ops[c.value];
        SimTime packet = p.packet_cost;
        if (kind == OpKind::Relay) return packet;
        SimTime work = p.proc_cost_per_op;
        if (working_set > p.fast_memory_capacity)
            work = static_cast<SimTime>(std::llround(static_cast<double>(work) * p.miss_penalty_multiplier));
        switch (kind) {
            case OpKind::ClientStep: return work + packet;
            case OpKind::ClientRoundTrip: return work + 2 * packet;
            default: return work;
        }
    }

    /// Places `bytes` of module state on `c`.
    void charge_memory(ComponentId c, Module m, std::uint64_t bytes) {
        const auto& p = topo_->component(c);
        std::uint64_t total = ledger_.resident_bytes[c.value] + bytes;
        if (total > p.memory_capacity)
            throw Error(Errc::CapacityExceeded, std::string(to_string(m)) + " state of " + std::to_string(bytes) +
                                                    " B does not fit on " + p.name + " (" +
                                                    std::to_string(p.memory_capacity) + " B)");
        ledger_.resident_bytes[c.value] = total;
        ledger_.peak_bytes[c.value] = std::max(ledger_.peak_bytes[c.value], total);
    }

    /// Resident lock state per processing thread.
    std::uint64_t working_set(ComponentId c) const {
        return ledger_.resident_bytes[c.value] / topo_->component(c).parallelism;
    }

    /// Sends one message over `hop` at `now`; returns its delay until it
    /// has been received (sender queueing + latency + receiver queueing).
    SimTime charge_message(const Hop& hop, SimTime now) {
        const auto& l = topo_->links().at(hop.link);
        SimTime depart = occupy(hop.from, now, l.per_message_cost);
        SimTime received = occupy(hop.to, depart + l.latency, l.per_message_cost);
        ++ledger_.link_sent[hop.link];
        return received - now;
    }

    /// Latency only; for the return leg of a request whose cost was
    /// charged on the way in.
    SimTime reply_latency(const Hop& hop) const { return topo_->links().at(hop.link).latency; }

    void mark_received(const Hop& hop) { ++ledger_.link_received[hop.link]; }

    /// Runs a job of length `cost` arriving at `arrival` on the earliest
    /// free thread; returns its finish time.
    SimTime reserve_thread(ComponentId c, SimTime arrival, SimTime cost) {
        auto& pool = threads_[c.value];
        SimTime start = std::max(arrival, pool.top());
        pool.pop();
        pool.push(start + cost);
        return start + cost;
    }

private:
    using ThreadPool = std::priority_queue<SimTime, std::vector<SimTime>, std::greater<>>;

    SimTime occupy(ComponentId c, SimTime t, std::uint32_t ops) {
        ledger_.comm_ops[c.value] += ops;
        SimTime interval = comm_interval_[c.value];
        if (interval == 0) return t;
        SimTime start = std::max(t, comm_busy_[c.value]);
        comm_busy_[c.value] = start + interval * ops;
        return start;
    }

    const Topology* topo_;
    ResourceLedger ledger_;
    std::vector<SimTime> comm_busy_;
    std::vector<SimTime> comm_interval_;
    std::vector<ThreadPool> threads_;
};

}  // namespace modlock
