#pragma once
/**
 * Placement of the four lock modules on hardware components, fusion of
 * co-located modules, and per-lock placement for setups that cache a hot
 * subset of locks on a separate component.
 */
#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "modlock/core_types.hpp"

namespace modlock {

enum class Module : std::uint8_t { Mode, Holder, Waiter, Grant };

inline constexpr std::array<Module, 4> kAllModules{Module::Mode, Module::Holder, Module::Waiter, Module::Grant};

constexpr std::string_view to_string(Module m) {
    switch (m) {
        case Module::Mode: return "mode";
        case Module::Holder: return "holder";
        case Module::Waiter: return "waiter";
        case Module::Grant: return "grant";
    }
    return "?";
}

constexpr std::size_t index_of(Module m) { return static_cast<std::size_t>(m); }

struct Assignment {
    std::array<ComponentId, 4> placement{};
    /// Modules sharing a component, ordered by first member. Filled by fuse().
    std::vector<std::vector<Module>> fusion_groups;

    ComponentId host(Module m) const { return placement[index_of(m)]; }
    bool co_located(Module a, Module b) const { return host(a) == host(b); }
    bool hosts_any(ComponentId c) const {
        return std::find(placement.begin(), placement.end(), c) != placement.end();
    }
    friend bool operator==(const Assignment&, const Assignment&) = default;
};

inline Assignment fuse(Assignment a) {
    a.fusion_groups.clear();
    for (Module m : kAllModules) {
        auto it = std::find_if(a.fusion_groups.begin(), a.fusion_groups.end(),
                               [&](const std::vector<Module>& g) { return a.co_located(g.front(), m); });
        if (it == a.fusion_groups.end())
            a.fusion_groups.push_back({m});
        else
            it->push_back(m);
    }
    return a;
}

inline Assignment make_assignment(ComponentId mode, ComponentId holder, ComponentId waiter, ComponentId grant) {
    Assignment a;
    a.placement = {mode, holder, waiter, grant};
    return fuse(a);
}

/// Holder and waiter state shares one queue structure when fused.
inline bool holder_waiter_fused(const Assignment& a) { return a.co_located(Module::Holder, Module::Waiter); }

/// Per-lock placement: locks below `cached_locks` use the cache assignment.
class Placement {
public:
    explicit Placement(Assignment primary) : primary_(fuse(std::move(primary))) {}
    Placement(Assignment primary, Assignment cache, std::uint32_t cached_locks)
        : primary_(fuse(std::move(primary))), cache_(fuse(std::move(cache))), cached_locks_(cached_locks) {}

    const Assignment& for_lock(LockId lock) const {
        return cache_ && lock.value < cached_locks_ ? *cache_ : primary_;
    }
    ComponentId host(Module m, LockId lock) const { return for_lock(lock).host(m); }
    bool is_cached(LockId lock) const { return cache_ && lock.value < cached_locks_; }

    const Assignment& primary() const { return primary_; }
    const std::optional<Assignment>& cache() const { return cache_; }
    std::uint32_t cached_locks() const { return cache_ ? cached_locks_ : 0; }

private:
    Assignment primary_;
    std::optional<Assignment> cache_;
    std::uint32_t cached_locks_ = 0;
};

}  // namespace modlock
