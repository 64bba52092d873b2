#pragma once
#include <cstdint>
#include <ostream>
#include <string_view>
#include <vector>

#include "modlock/core_types.hpp"

namespace modlock {

enum class HistoryKind : std::uint8_t { AcquireInvoke, AcquireGrantObserved, ReleaseInvoke, ReleaseReturn, Abort };

constexpr std::string_view to_string(HistoryKind k) {
    switch (k) {
        case HistoryKind::AcquireInvoke: return "AcquireInvoke";
        case HistoryKind::AcquireGrantObserved: return "AcquireGrantObserved";
        case HistoryKind::ReleaseInvoke: return "ReleaseInvoke";
        case HistoryKind::ReleaseReturn: return "ReleaseReturn";
        case HistoryKind::Abort: return "Abort";
    }
    return "?";
}

struct HistoryEvent {
    SimTime time = 0;
    std::uint32_t client = 0;
    LockId lock{};
    HistoryKind kind = HistoryKind::AcquireInvoke;
    AcquireMode mode = AcquireMode::Exclusive;  ///< Meaningful for AcquireInvoke.
    friend bool operator==(const HistoryEvent&, const HistoryEvent&) = default;
};

using History = std::vector<HistoryEvent>;

/// One line per event: time in picoseconds, client, lock, kind, mode.
inline void write_history(std::ostream& os, const History& h) {
    for (const auto& e : h) {
        os << e.time << ' ' << e.client << ' ' << e.lock.value << ' ' << to_string(e.kind);
        if (e.kind == HistoryKind::AcquireInvoke) os << ' ' << to_string(e.mode);
        os << '\n';
    }
}

}  // namespace modlock
