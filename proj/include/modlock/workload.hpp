#pragma once
/**
 * Workload description and the deterministic random sources used to draw
 * lock accesses.
 *
 * Zipfian draws use the Gray et al. approximation popularised by YCSB:
 * one uniform draw per sample, no rejection. Rank 0 is the most popular
 * lock, so lock ids double as popularity ranks.
 */
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <utility>
#include <variant>
#include <vector>

#include "modlock/core_types.hpp"

namespace modlock {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// mt19937_64 with portable conversions (the standard distributions are
/// implementation-defined, which would break cross-platform replay).
class Rng {
public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) {
        std::uint64_t s = seed ^ (stream * 0xD1B54A32D192ED03ULL);
        std::seed_seq seq{static_cast<std::uint32_t>(splitmix64(s)), static_cast<std::uint32_t>(splitmix64(s)),
                          static_cast<std::uint32_t>(splitmix64(s)), static_cast<std::uint32_t>(splitmix64(s))};
        engine_.seed(seq);
    }

    std::uint64_t next() { return engine_(); }
    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    /// Uniform in [0, n); multiply-shift, bias below 2^-64 * n.
    std::uint64_t below(std::uint64_t n) {
        return static_cast<std::uint64_t>((static_cast<unsigned __int128>(engine_()) * n) >> 64);
    }
    bool bernoulli(double p) { return uniform() < p; }

private:
    std::mt19937_64 engine_;
};

/// Generalised harmonic number sum_{i=1..n} i^-theta. Cached per (n, theta).
inline double zeta(std::uint64_t n, double theta) {
    static std::mutex mu;
    static std::map<std::pair<std::uint64_t, double>, double> cache;
    std::scoped_lock guard(mu);
    auto key = std::make_pair(n, theta);
    if (auto it = cache.find(key); it != cache.end()) return it->second;
    double s = 0;
    for (std::uint64_t i = 1; i <= n; ++i) s += std::pow(static_cast<double>(i), -theta);
    cache.emplace(key, s);
    return s;
}

class ZipfGenerator {
public:
    ZipfGenerator(std::uint64_t n, double theta) : n_(n), theta_(theta) {
        if (n == 0) throw Error(Errc::Config, "zipfian over zero items");
        if (theta < 0 || theta >= 1) throw Error(Errc::Config, "zipfian theta must be in [0, 1)");
        zetan_ = zeta(n, theta);
        double zeta2 = zeta(2, theta);
        alpha_ = 1.0 / (1.0 - theta);
        eta_ = (1.0 - std::pow(2.0 / static_cast<double>(n), 1.0 - theta)) / (1.0 - zeta2 / zetan_);
        half_pow_ = 1.0 + std::pow(0.5, theta);
    }

    std::uint64_t next(Rng& rng) const {
        double u = rng.uniform();
        double uz = u * zetan_;
        if (uz < 1.0) return 0;
        if (uz < half_pow_ && n_ > 1) return 1;
        auto r = static_cast<std::uint64_t>(static_cast<double>(n_) * std::pow(eta_ * u - eta_ + 1.0, alpha_));
        return std::min(r, n_ - 1);
    }

    std::uint64_t size() const { return n_; }
    double theta() const { return theta_; }

private:
    std::uint64_t n_;
    double theta_;
    double zetan_ = 0, alpha_ = 0, eta_ = 0, half_pow_ = 0;
};

struct Uniform {
    friend bool operator==(Uniform, Uniform) = default;
};
struct Zipfian {
    double theta = 0.99;
    friend bool operator==(Zipfian, Zipfian) = default;
};
using AccessDistribution = std::variant<Uniform, Zipfian>;

/// One operation of a scripted client: acquire `lock` no earlier than
/// `start_at`, hold it for `hold`.
struct ScriptedOp {
    LockId lock{};
    AcquireMode mode = AcquireMode::Exclusive;
    SimTime start_at = 0;
    SimTime hold = 0;
};

struct Workload {
    std::uint32_t num_clients = 1;
    std::uint32_t num_locks = 1;
    AccessDistribution distribution = Uniform{};
    double shared_fraction = 0;
    SimTime critical_section_time = from_micros(1.0);
    SimTime think_time = 0;
    std::uint64_t total_ops = 0;
    std::uint64_t seed = 1;
    /// Components hosting the clients, assigned round robin.
    std::vector<ComponentId> client_components{ComponentId{0}};
    /// When non-empty, client i runs script[i] instead of random ops.
    std::vector<std::vector<ScriptedOp>> script;

    void validate() const {
        if (num_clients == 0 && script.empty()) throw Error(Errc::Config, "workload has no clients");
        if (num_locks == 0) throw Error(Errc::Config, "workload has no locks");
        if (shared_fraction < 0 || shared_fraction > 1) throw Error(Errc::Config, "shared_fraction outside [0, 1]");
        if (const auto* z = std::get_if<Zipfian>(&distribution); z && (z->theta < 0 || z->theta >= 1))
            throw Error(Errc::Config, "zipfian theta must be in [0, 1)");
        if (critical_section_time < 0 || think_time < 0) throw Error(Errc::Config, "negative time");
        if (client_components.empty()) throw Error(Errc::Config, "no client components");
        for (const auto& ops : script)
            for (const auto& op : ops)
                if (op.lock.value >= num_locks) throw Error(Errc::Config, "scripted lock out of range");
    }
};

/// Draws lock ids for one client.
class LockSampler {
public:
    LockSampler(const Workload& w, std::shared_ptr<const ZipfGenerator> zipf) : n_(w.num_locks), zipf_(std::move(zipf)) {}

    LockId next(Rng& rng) const {
        return LockId{static_cast<std::uint32_t>(zipf_ ? zipf_->next(rng) : rng.below(n_))};
    }

private:
    std::uint64_t n_;
    std::shared_ptr<const ZipfGenerator> zipf_;
};

}  // namespace modlock
