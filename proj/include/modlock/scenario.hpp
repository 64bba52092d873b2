#pragma once
/**
 * Scenario files: YAML descriptions of a topology, a module assignment and
 * a workload. Diagnostics name the file, line and field at fault.
 *
 *   name: smartnic_modular
 *   baseline: smartnic_monolithic_cpu      # optional, used by compare
 *   topology:
 *     components:
 *       - {name: nic, kind: SmartNIC, proc_cost_us: 0.3, parallelism: 256}
 *     links:
 *       - {a: clients, b: nic, latency_us: 1.5}
 *   assignment: {mode: nic, holder: server, waiter: server, grant: nic}  # or: plan
 *   cache: {component: switch, locks: auto}                            # optional
 *   notification: {mode: poll, interval_us: 2, backoff: 2, cap_us: 64}
 *   workload: {clients: 64, client_components: [clients], locks: 1000,
 *              distribution: {zipfian: 0.99}, total_ops: 10000}
 */
#include <yaml-cpp/yaml.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "modlock/planner.hpp"
#include "modlock/simulator.hpp"

namespace modlock {

struct Scenario {
    std::string name;
    std::string baseline;
    std::uint64_t seed = 1;
    SimConfig sim;
    bool planned = false;  ///< Assignment chosen by the planner.
    PlannerParams planner;
    std::uint64_t probe_ops = 200;  ///< Single-client run for unloaded latency; 0 disables.
};

namespace detail {

class YamlReader {
public:
    explicit YamlReader(std::string source) : source_(std::move(source)) {}

    [[noreturn]] void fail(const YAML::Node& n, const std::string& field, const std::string& msg) const {
        std::string where = source_;
        if (n.IsDefined() && n.Mark().line >= 0) where += ":" + std::to_string(n.Mark().line + 1);
        throw Error(Errc::Config, where + ": " + field + ": " + msg);
    }

    YAML::Node require(const YAML::Node& parent, const std::string& key, const std::string& path) const {
        if (!parent.IsMap()) fail(parent, path, "expected a mapping");
        YAML::Node n = parent[key];
        if (!n) fail(parent, path + "." + key, "missing");
        return n;
    }

    template <typename T>
    T as(const YAML::Node& n, const std::string& field) const {
        try {
            return n.as<T>();
        } catch (const YAML::Exception&) {
            fail(n, field, "cannot read '" + (n.IsScalar() ? n.Scalar() : std::string("<non-scalar>")) + "'");
        }
    }

    template <typename T>
    T get(const YAML::Node& parent, const std::string& key, const std::string& path, T fallback) const {
        if (!parent || !parent[key]) return fallback;
        return as<T>(parent[key], path + "." + key);
    }

    template <typename T>
    T non_negative(const YAML::Node& parent, const std::string& key, const std::string& path, T fallback) const {
        T v = get<T>(parent, key, path, fallback);
        if (v < T{}) fail(parent[key], path + "." + key, "must not be negative");
        return v;
    }

    void only(const YAML::Node& n, const std::string& path, std::initializer_list<const char*> keys) const {
        if (!n.IsMap()) fail(n, path, "expected a mapping");
        for (const auto& kv : n) {
            auto k = kv.first.as<std::string>();
            if (std::find_if(keys.begin(), keys.end(), [&](const char* s) { return k == s; }) == keys.end())
                fail(kv.first, path + "." + k, "unknown field");
        }
    }

private:
    std::string source_;
};

inline ComponentKind parse_kind(const YamlReader& r, const YAML::Node& n, const std::string& field) {
    auto s = r.as<std::string>(n, field);
    for (auto k : {ComponentKind::ServerCPU, ComponentKind::SmartNIC, ComponentKind::Switch, ComponentKind::ComputeNode,
                   ComponentKind::MemoryNode})
        if (s == to_string(k)) return k;
    r.fail(n, field, "unknown component kind '" + s + "'");
}

inline Resource parse_resource(const YamlReader& r, const YAML::Node& n, const std::string& field) {
    auto s = r.as<std::string>(n, field);
    for (auto x : {Resource::Processing, Resource::Memory, Resource::Communication})
        if (s == to_string(x)) return x;
    r.fail(n, field, "unknown resource '" + s + "'");
}

inline Topology parse_topology(const YamlReader& r, const YAML::Node& root) {
    YAML::Node t = r.require(root, "topology", "scenario");
    r.only(t, "topology", {"components", "links"});
    YAML::Node comps = r.require(t, "components", "topology");
    if (!comps.IsSequence() || comps.size() == 0) r.fail(comps, "topology.components", "expected a non-empty list");
    std::vector<HardwareProfile> out;
    for (std::size_t i = 0; i < comps.size(); ++i) {
        const YAML::Node& c = comps[i];
        std::string path = "topology.components[" + std::to_string(i) + "]";
        r.only(c, path,
               {"name", "kind", "placeable", "proc_cost_us", "packet_cost_us", "parallelism", "memory_bytes",
                "fast_memory_bytes", "miss_penalty", "comm_ops_per_s", "scarce"});
        HardwareProfile p;
        p.name = r.as<std::string>(r.require(c, "name", path), path + ".name");
        for (const auto& prev : out)
            if (prev.name == p.name) r.fail(c["name"], path + ".name", "duplicate component '" + p.name + "'");
        p.kind = parse_kind(r, r.require(c, "kind", path), path + ".kind");
        p.placeable = r.get<bool>(c, "placeable", path, true);
        p.proc_cost_per_op = from_micros(r.non_negative<double>(c, "proc_cost_us", path, to_micros(p.proc_cost_per_op)));
        p.packet_cost = from_micros(r.non_negative<double>(c, "packet_cost_us", path, 0.0));
        p.parallelism = r.get<std::uint32_t>(c, "parallelism", path, 1);
        p.memory_capacity = r.get<std::uint64_t>(c, "memory_bytes", path, p.memory_capacity);
        p.fast_memory_capacity =
            r.get<std::uint64_t>(c, "fast_memory_bytes", path, std::min(p.fast_memory_capacity, p.memory_capacity));
        p.miss_penalty_multiplier = r.get<double>(c, "miss_penalty", path, p.miss_penalty_multiplier);
        p.comm_ops_budget = r.non_negative<double>(c, "comm_ops_per_s", path, 0.0);
        if (YAML::Node s = c["scarce"]) {
            if (!s.IsSequence()) r.fail(s, path + ".scarce", "expected a list");
            for (std::size_t j = 0; j < s.size(); ++j) p.scarce.push_back(parse_resource(r, s[j], path + ".scarce"));
        } else {
            p.scarce = default_scarce(p.kind);
        }
        out.push_back(std::move(p));
    }
    auto lookup = [&](const YAML::Node& n, const std::string& field) {
        auto name = r.as<std::string>(n, field);
        for (std::size_t i = 0; i < out.size(); ++i)
            if (out[i].name == name) return ComponentId{static_cast<std::uint32_t>(i)};
        r.fail(n, field, "unknown component '" + name + "'");
    };
    std::vector<LinkProfile> links;
    if (YAML::Node ls = t["links"]) {
        if (!ls.IsSequence()) r.fail(ls, "topology.links", "expected a list");
        for (std::size_t i = 0; i < ls.size(); ++i) {
            const YAML::Node& l = ls[i];
            std::string path = "topology.links[" + std::to_string(i) + "]";
            r.only(l, path, {"a", "b", "latency_us", "cost"});
            LinkProfile lp;
            lp.a = lookup(r.require(l, "a", path), path + ".a");
            lp.b = lookup(r.require(l, "b", path), path + ".b");
            lp.latency = from_micros(r.non_negative<double>(l, "latency_us", path, 0.0));
            lp.per_message_cost = r.get<std::uint32_t>(l, "cost", path, 1);
            links.push_back(lp);
        }
    }
    try {
        return Topology(std::move(out), std::move(links));
    } catch (const Error& e) {
        r.fail(t, "topology", e.what());
    }
}

inline ComponentId component_ref(const YamlReader& r, const Topology& topo, const YAML::Node& n,
                                 const std::string& field) {
    auto name = r.as<std::string>(n, field);
    auto c = topo.find(name);
    if (!c) r.fail(n, field, "unknown component '" + name + "'");
    return *c;
}

inline std::uint64_t auto_cache_size(const Scenario& s, ComponentId cache) {
    const auto& hw = s.sim.topology.component(cache);
    Assignment a = make_assignment(cache, cache, cache, cache);
    FootprintInputs in;
    in.max_holders = s.sim.max_holders;
    in.max_waiters = s.sim.max_waiters;
    in.num_clients = s.sim.workload.num_clients;
    in.tracking = s.sim.holder_tracking;
    in.push = std::holds_alternative<PushMode>(s.sim.notification);
    auto fits = [&](std::uint64_t n) {
        in.num_locks = n;
        auto b = assignment_footprints(a, in, s.sim.footprint);
        return b[0] + b[1] + b[2] + b[3] <= hw.memory_capacity;
    };
    std::uint64_t lo = 0, hi = s.sim.workload.num_locks;
    while (lo < hi) {
        std::uint64_t mid = hi - (hi - lo) / 2;
        if (fits(mid))
            lo = mid;
        else
            hi = mid - 1;
    }
    return lo;
}

}  // namespace detail

/// Runs the planner for a scenario and returns the ranked plans.
inline std::vector<RankedPlan> plan_scenario(const Scenario& s) {
    PlannerParams p = s.planner;
    if (p.client_locations.empty()) p.client_locations = s.sim.workload.client_components;
    return enumerate_assignments(s.sim.topology, default_requirements(), p);
}

inline Scenario parse_scenario(const std::string& text, const std::string& source = "<scenario>") {
    detail::YamlReader r(source);
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::ParserException& e) {
        throw Error(Errc::Config, source + ":" + std::to_string(e.mark.line + 1) + ": " + e.msg);
    }
    r.only(root, "scenario",
           {"name", "baseline", "seed", "topology", "assignment", "cache", "holder_tracking", "notification",
            "validate_grants", "workload", "planner", "footprint", "probe_ops", "max_events"});
    Scenario s;
    s.name = r.as<std::string>(r.require(root, "name", "scenario"), "name");
    s.baseline = r.get<std::string>(root, "baseline", "scenario", "");
    s.seed = r.get<std::uint64_t>(root, "seed", "scenario", 1);
    s.probe_ops = r.get<std::uint64_t>(root, "probe_ops", "scenario", s.probe_ops);
    s.sim.max_events = r.get<std::uint64_t>(root, "max_events", "scenario", s.sim.max_events);
    s.sim.topology = detail::parse_topology(r, root);
    const Topology& topo = s.sim.topology;

    if (YAML::Node h = root["holder_tracking"]) {
        auto v = r.as<std::string>(h, "holder_tracking");
        if (v == "identity")
            s.sim.holder_tracking = HolderTracking::Identity;
        else if (v == "counter")
            s.sim.holder_tracking = HolderTracking::Counter;
        else
            r.fail(h, "holder_tracking", "expected identity or counter");
    }
    s.sim.validation =
        r.get<bool>(root, "validate_grants", "scenario", true) ? GrantValidation::Enabled : GrantValidation::Disabled;

    if (YAML::Node n = root["notification"]) {
        r.only(n, "notification", {"mode", "interval_us", "backoff", "cap_us"});
        auto mode = r.as<std::string>(r.require(n, "mode", "notification"), "notification.mode");
        if (mode == "push") {
            s.sim.notification = PushMode{};
        } else if (mode == "poll") {
            PollMode p;
            p.interval = from_micros(r.non_negative<double>(n, "interval_us", "notification", to_micros(p.interval)));
            p.multiplier = r.get<double>(n, "backoff", "notification", p.multiplier);
            p.max_interval = from_micros(r.non_negative<double>(n, "cap_us", "notification", to_micros(p.max_interval)));
            if (p.interval <= 0) r.fail(n["interval_us"], "notification.interval_us", "must be positive");
            if (p.multiplier < 1) r.fail(n["backoff"], "notification.backoff", "must be at least 1");
            s.sim.notification = p;
        } else {
            r.fail(n["mode"], "notification.mode", "expected push or poll");
        }
    }

    if (YAML::Node f = root["footprint"]) {
        r.only(f, "footprint",
               {"mode_bits", "grant_counter_bytes", "packed_modes", "holder_counter_bytes", "holder_entry_bytes",
                "waiter_entry_bytes", "grant_push_bytes", "grant_poll_bytes_per_client", "max_holders",
                "max_waiters"});
        auto& p = s.sim.footprint;
        p.mode_bits = r.non_negative<double>(f, "mode_bits", "footprint", p.mode_bits);
        p.grant_counter_bytes = r.get(f, "grant_counter_bytes", "footprint", p.grant_counter_bytes);
        p.packed_modes = r.get(f, "packed_modes", "footprint", p.packed_modes);
        p.holder_counter_bytes = r.get(f, "holder_counter_bytes", "footprint", p.holder_counter_bytes);
        p.holder_entry_bytes = r.get(f, "holder_entry_bytes", "footprint", p.holder_entry_bytes);
        p.waiter_entry_bytes = r.get(f, "waiter_entry_bytes", "footprint", p.waiter_entry_bytes);
        p.grant_push_bytes = r.get(f, "grant_push_bytes", "footprint", p.grant_push_bytes);
        p.grant_poll_bytes_per_client = r.get(f, "grant_poll_bytes_per_client", "footprint", p.grant_poll_bytes_per_client);
        s.sim.max_holders = r.get(f, "max_holders", "footprint", s.sim.max_holders);
        s.sim.max_waiters = r.get(f, "max_waiters", "footprint", s.sim.max_waiters);
    }

    YAML::Node w = r.require(root, "workload", "scenario");
    r.only(w, "workload",
           {"clients", "client_components", "locks", "distribution", "shared_fraction", "critical_section_us",
            "think_us", "total_ops"});
    Workload& wl = s.sim.workload;
    wl.num_clients = r.get<std::uint32_t>(w, "clients", "workload", 1);
    wl.num_locks = r.get<std::uint32_t>(w, "locks", "workload", 1);
    wl.shared_fraction = r.get<double>(w, "shared_fraction", "workload", 0.0);
    wl.critical_section_time = from_micros(r.non_negative<double>(w, "critical_section_us", "workload", 1.0));
    wl.think_time = from_micros(r.non_negative<double>(w, "think_us", "workload", 0.0));
    wl.total_ops = r.get<std::uint64_t>(w, "total_ops", "workload", 0);
    wl.seed = s.seed;
    if (YAML::Node d = w["distribution"]) {
        if (d.IsScalar() && d.Scalar() == "uniform") {
            wl.distribution = Uniform{};
        } else if (d.IsMap() && d["zipfian"]) {
            r.only(d, "workload.distribution", {"zipfian"});
            wl.distribution = Zipfian{r.as<double>(d["zipfian"], "workload.distribution.zipfian")};
        } else {
            r.fail(d, "workload.distribution", "expected uniform or {zipfian: theta}");
        }
    }
    YAML::Node cc = r.require(w, "client_components", "workload");
    if (!cc.IsSequence() || cc.size() == 0) r.fail(cc, "workload.client_components", "expected a non-empty list");
    wl.client_components.clear();
    for (std::size_t i = 0; i < cc.size(); ++i)
        wl.client_components.push_back(detail::component_ref(r, topo, cc[i], "workload.client_components"));
    try {
        wl.validate();
    } catch (const Error& e) {
        r.fail(w, "workload", e.what());
    }

    s.planner.inputs.num_locks = wl.num_locks;
    s.planner.inputs.max_holders = s.sim.max_holders;
    s.planner.inputs.max_waiters = s.sim.max_waiters;
    if (YAML::Node p = root["planner"]) {
        r.only(p, "planner", {"num_locks", "max_holders", "max_waiters"});
        s.planner.inputs.num_locks = r.get(p, "num_locks", "planner", s.planner.inputs.num_locks);
        s.planner.inputs.max_holders = r.get(p, "max_holders", "planner", s.planner.inputs.max_holders);
        s.planner.inputs.max_waiters = r.get(p, "max_waiters", "planner", s.planner.inputs.max_waiters);
    }
    s.planner.inputs.num_clients = wl.num_clients;
    s.planner.inputs.tracking = s.sim.holder_tracking;
    s.planner.inputs.push = std::holds_alternative<PushMode>(s.sim.notification);
    s.planner.footprint = s.sim.footprint;
    s.planner.client_locations = wl.client_components;

    YAML::Node a = r.require(root, "assignment", "scenario");
    if (a.IsScalar() && a.Scalar() == "plan") {
        s.planned = true;
        auto plans = plan_scenario(s);
        if (plans.empty()) r.fail(a, "assignment", "no placeable components");
        s.sim.assignment = plans.front().assignment;
    } else if (a.IsMap()) {
        r.only(a, "assignment", {"mode", "holder", "waiter", "grant"});
        auto host = [&](const char* m) {
            return detail::component_ref(r, topo, r.require(a, m, "assignment"), std::string("assignment.") + m);
        };
        s.sim.assignment = make_assignment(host("mode"), host("holder"), host("waiter"), host("grant"));
    } else {
        r.fail(a, "assignment", "expected a module mapping or 'plan'");
    }

    if (YAML::Node c = root["cache"]) {
        r.only(c, "cache", {"component", "locks"});
        ComponentId at = detail::component_ref(r, topo, r.require(c, "component", "cache"), "cache.component");
        s.sim.cache_assignment = make_assignment(at, at, at, at);
        YAML::Node n = c["locks"];
        if (!n || (n.IsScalar() && n.Scalar() == "auto"))
            s.sim.cached_locks = static_cast<std::uint32_t>(detail::auto_cache_size(s, at));
        else
            s.sim.cached_locks = r.as<std::uint32_t>(n, "cache.locks");
    }
    return s;
}

inline Scenario load_scenario(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::Config, path.string() + ": cannot open");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_scenario(ss.str(), path.string());
}

#ifdef MODLOCK_SCENARIO_DIR
inline constexpr const char* kScenarioDir = MODLOCK_SCENARIO_DIR;
#else
inline constexpr const char* kScenarioDir = "scenarios";
#endif

inline const std::vector<std::string>& builtin_scenarios() {
    static const std::vector<std::string> names{"smartnic_monolithic_cpu", "smartnic_monolithic_nic",
                                                "smartnic_modular",        "dm_polling_baseline",
                                                "dm_polling_backoff",      "dm_modular",
                                                "hotlock_cache_switch"};
    return names;
}

/// A path to an existing file, or the name of a built-in scenario.
inline std::filesystem::path resolve_scenario(const std::string& ref) {
    std::filesystem::path p(ref);
    if (std::filesystem::exists(p)) return p;
    for (const auto& n : builtin_scenarios())
        if (n == ref || n + ".yaml" == ref) return std::filesystem::path(kScenarioDir) / (n + ".yaml");
    throw Error(Errc::Config, ref + ": no such file or built-in scenario");
}

}  // namespace modlock
