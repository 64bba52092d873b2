#pragma once
/**
 * Assignment planner: scores every placement of the four modules on a
 * topology and ranks them.
 *
 * Ranking is lexicographic: feasible plans first, then fewer bottleneck
 * violations (a module loading a resource its host is short of, or state
 * that does not fit), then lower predicted latency of an uncontended
 * grant, which only involves the mode and grant managers.
 */
#include <algorithm>
#include <cstdint>
#include <vector>

#include "modlock/assignment.hpp"
#include "modlock/hardware_model.hpp"

namespace modlock {

struct ModuleRequirement {
    Module module;
    bool on_critical_path;
    Resource dominant_resource;
};

inline std::vector<ModuleRequirement> default_requirements() {
    return {{Module::Mode, true, Resource::Processing},
            {Module::Holder, false, Resource::Memory},
            {Module::Waiter, false, Resource::Memory},
            {Module::Grant, true, Resource::Communication}};
}

struct PlannerParams {
    FootprintInputs inputs;
    FootprintParams footprint;
    /// Where requests come from; latency is averaged over these.
    std::vector<ComponentId> client_locations;
};

struct PlanScore {
    SimTime predicted_grant_latency = 0;
    std::uint32_t bottleneck_violations = 0;
    bool feasible = true;
    friend bool operator==(const PlanScore&, const PlanScore&) = default;
};

struct RankedPlan {
    Assignment assignment;
    PlanScore score;
};

inline PlanScore score(const Assignment& a, const Topology& topo, const std::vector<ModuleRequirement>& reqs,
                       const PlannerParams& params) {
    PlanScore s;
    auto bytes = assignment_footprints(a, params.inputs, params.footprint);
    std::vector<std::uint64_t> resident(topo.size(), 0);
    for (const auto& r : reqs) {
        ComponentId host = a.host(r.module);
        const auto& hw = topo.component(host);
        bool violated = !hw.placeable || hw.is_scarce(r.dominant_resource);
        if (!hw.placeable) s.feasible = false;
        std::uint64_t b = bytes[index_of(r.module)];
        if (resident[host.value] + b > hw.memory_capacity) {
            violated = true;
            s.feasible = false;
        } else {
            resident[host.value] += b;
        }
        s.bottleneck_violations += violated;
    }

    auto step = [&](ComponentId c) {
        const auto& hw = topo.component(c);
        SimTime work = hw.proc_cost_per_op;
        if (resident[c.value] / hw.parallelism > hw.fast_memory_capacity)
            work = static_cast<SimTime>(static_cast<double>(work) * hw.miss_penalty_multiplier);
        return work + hw.packet_cost;
    };
    ComponentId mode = a.host(Module::Mode), grant = a.host(Module::Grant);
    SimTime inner = step(mode) + step(grant) + (mode == grant ? 0 : topo.route_latency(mode, grant));
    std::vector<ComponentId> sources = params.client_locations;
    if (sources.empty()) sources.push_back(mode);
    SimTime total = 0;
    for (ComponentId c : sources) total += topo.route_latency(c, mode) + inner + topo.route_latency(grant, c);
    s.predicted_grant_latency = total / static_cast<SimTime>(sources.size());
    return s;
}

/// Lexicographic rank key; lower is better.
inline bool ranks_before(const RankedPlan& x, const RankedPlan& y) {
    if (x.score.feasible != y.score.feasible) return x.score.feasible;
    if (x.score.bottleneck_violations != y.score.bottleneck_violations)
        return x.score.bottleneck_violations < y.score.bottleneck_violations;
    if (x.score.predicted_grant_latency != y.score.predicted_grant_latency)
        return x.score.predicted_grant_latency < y.score.predicted_grant_latency;
    return x.assignment.placement < y.assignment.placement;
}

inline std::vector<RankedPlan> enumerate_assignments(const Topology& topo, const std::vector<ModuleRequirement>& reqs,
                                                     const PlannerParams& params) {
    std::vector<ComponentId> slots;
    for (const auto& c : topo.components())
        if (c.placeable) slots.push_back(c.component);
    std::vector<RankedPlan> plans;
    for (ComponentId m : slots)
        for (ComponentId h : slots)
            for (ComponentId w : slots)
                for (ComponentId g : slots) {
                    Assignment a = make_assignment(m, h, w, g);
                    plans.push_back({a, score(a, topo, reqs, params)});
                }
    std::sort(plans.begin(), plans.end(), ranks_before);
    return plans;
}

}  // namespace modlock
