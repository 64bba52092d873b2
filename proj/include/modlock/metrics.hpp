#pragma once
/**
 * Scenario runs and their CSV report: one `scenario,seed,metric,value`
 * row per metric, numbers in shortest round-trip form so reruns are
 * byte-identical regardless of locale.
 */
#include <charconv>
#include <cmath>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "modlock/scenario.hpp"

namespace modlock {

struct MetricRow {
    std::string scenario;
    std::uint64_t seed;
    std::string metric;
    double value;
};

struct ScenarioRun {
    SimResult result;
    std::optional<SimResult> probe;
    std::vector<MetricRow> rows;

    std::optional<double> metric(std::string_view name) const {
        for (const auto& r : rows)
            if (r.metric == name) return r.value;
        return std::nullopt;
    }
};

inline SimConfig seeded(const Scenario& s, std::uint64_t seed) {
    SimConfig c = s.sim;
    c.workload.seed = seed;
    return c;
}

/// Same scenario with one client issuing `ops` back-to-back operations.
inline SimConfig unloaded(const Scenario& s, std::uint64_t seed, std::uint64_t ops) {
    SimConfig c = seeded(s, seed);
    c.workload.num_clients = 1;
    c.workload.total_ops = ops;
    c.workload.think_time = 0;
    c.record_history = false;
    return c;
}

inline ScenarioRun run_scenario(const Scenario& s, std::uint64_t seed) {
    ScenarioRun run;
    run.result = run_simulation(seeded(s, seed));
    if (s.probe_ops > 0) run.probe = run_simulation(unloaded(s, seed, s.probe_ops));

    const SimResult& r = run.result;
    auto add = [&](std::string metric, double v) { run.rows.push_back({s.name, seed, std::move(metric), v}); };
    add("completed_ops", static_cast<double>(r.completed_ops));
    add("makespan_us", to_micros(r.makespan));
    add("throughput_ops_per_s", r.throughput_ops_per_s());
    add("acquire_p50_us", to_micros(percentile(r.acquire_latencies, 0.50)));
    add("acquire_p99_us", to_micros(percentile(r.acquire_latencies, 0.99)));
    if (run.probe) {
        add("unloaded_acquire_p50_us", to_micros(percentile(run.probe->acquire_latencies, 0.50)));
        add("unloaded_acquire_p99_us", to_micros(percentile(run.probe->acquire_latencies, 0.99)));
    }
    add("aborts", static_cast<double>(r.engine.aborted_validations()));
    add("polls", static_cast<double>(r.polls));
    add("cached_fraction",
        r.requests ? static_cast<double>(r.cached_requests) / static_cast<double>(r.requests) : 0.0);
    const auto& comps = s.sim.topology.components();
    for (std::size_t i = 0; i < comps.size(); ++i) {
        add("comm_ops." + comps[i].name, static_cast<double>(r.ledger.comm_ops[i]));
        add("proc_ops." + comps[i].name, static_cast<double>(r.ledger.proc_ops[i]));
        add("peak_memory_bytes." + comps[i].name, static_cast<double>(r.ledger.peak_bytes[i]));
    }
    return run;
}

inline std::string format_number(double v) {
    char buf[64];
    auto res = std::abs(v) < 0x1p53 && v == std::trunc(v)
                   ? std::to_chars(buf, buf + sizeof buf, static_cast<std::int64_t>(v))
                   : std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline void write_csv_header(std::ostream& os) { os << "scenario,seed,metric,value\n"; }

inline void write_csv_rows(std::ostream& os, const std::vector<MetricRow>& rows) {
    for (const auto& r : rows) os << r.scenario << ',' << r.seed << ',' << r.metric << ',' << format_number(r.value) << '\n';
}

inline void write_csv(std::ostream& os, const std::vector<MetricRow>& rows) {
    write_csv_header(os);
    write_csv_rows(os, rows);
}

}  // namespace modlock
