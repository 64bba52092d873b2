#pragma once
/**
 * Shared vocabulary for the modularized lock manager: identifiers, lock
 * modes, grant counters, simulated time and the error type every module
 * throws.
 */
#include <compare>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace modlock {

/// Simulated time in picoseconds.
using SimTime = std::int64_t;

constexpr SimTime kPicosPerMicro = 1'000'000;
constexpr SimTime kPicosPerSecond = 1'000'000'000'000;

constexpr SimTime from_micros(double us) {
    return static_cast<SimTime>(us * static_cast<double>(kPicosPerMicro) + (us >= 0 ? 0.5 : -0.5));
}
constexpr double to_micros(SimTime t) { return static_cast<double>(t) / static_cast<double>(kPicosPerMicro); }

struct LockId {
    std::uint32_t value = 0;
    friend constexpr auto operator<=>(LockId, LockId) = default;
};

struct ComponentId {
    std::uint32_t value = 0;
    friend constexpr auto operator<=>(ComponentId, ComponentId) = default;
};

/// A client and the hardware component hosting it.
struct ClientId {
    std::uint32_t id = 0;
    ComponentId location{};
    friend constexpr bool operator==(ClientId, ClientId) = default;
    friend constexpr auto operator<=>(ClientId a, ClientId b) { return a.id <=> b.id; }
};

struct RequestId {
    std::uint64_t value = 0;
    friend constexpr auto operator<=>(RequestId, RequestId) = default;
};

/// Number of times a lock has been granted. Monotone within a run.
struct GrantCount {
    std::uint64_t value = 0;
    friend constexpr auto operator<=>(GrantCount, GrantCount) = default;
    constexpr GrantCount operator+(std::uint64_t n) const { return GrantCount{value + n}; }
};

enum class AcquireMode : std::uint8_t { Shared, Exclusive };
enum class LockMode : std::uint8_t { Free, Shared, Exclusive };

constexpr LockMode to_lock_mode(AcquireMode m) {
    return m == AcquireMode::Shared ? LockMode::Shared : LockMode::Exclusive;
}

/// Whether a lock currently in `current` can be granted in `requested`.
constexpr bool compatible(LockMode current, AcquireMode requested) {
    return current == LockMode::Free || (current == LockMode::Shared && requested == AcquireMode::Shared);
}

constexpr std::string_view to_string(AcquireMode m) { return m == AcquireMode::Shared ? "S" : "X"; }
constexpr std::string_view to_string(LockMode m) {
    switch (m) {
        case LockMode::Free: return "Free";
        case LockMode::Shared: return "Shared";
        case LockMode::Exclusive: return "Exclusive";
    }
    return "?";
}

enum class Errc {
    UnknownLock,
    DuplicateHolder,
    NotHolder,
    NoReleaseInProgress,
    DuplicateWaiter,
    WaiterOverflow,
    UnknownComponent,
    UnknownRequest,
    UnknownLink,
    WrongNotificationMode,
    DuplicateRequest,
    InfeasibleAssignment,
    NonQuiescent,
    MalformedHistory,
    TooLarge,
    CapacityExceeded,
    Config,
};

constexpr std::string_view to_string(Errc e) {
    switch (e) {
        case Errc::UnknownLock: return "UnknownLock";
        case Errc::DuplicateHolder: return "DuplicateHolder";
        case Errc::NotHolder: return "NotHolder";
        case Errc::NoReleaseInProgress: return "NoReleaseInProgress";
        case Errc::DuplicateWaiter: return "DuplicateWaiter";
        case Errc::WaiterOverflow: return "WaiterOverflow";
        case Errc::UnknownComponent: return "UnknownComponent";
        case Errc::UnknownRequest: return "UnknownRequest";
        case Errc::UnknownLink: return "UnknownLink";
        case Errc::WrongNotificationMode: return "WrongNotificationMode";
        case Errc::DuplicateRequest: return "DuplicateRequest";
        case Errc::InfeasibleAssignment: return "InfeasibleAssignment";
        case Errc::NonQuiescent: return "NonQuiescent";
        case Errc::MalformedHistory: return "MalformedHistory";
        case Errc::TooLarge: return "TooLarge";
        case Errc::CapacityExceeded: return "CapacityExceeded";
        case Errc::Config: return "Config";
    }
    return "?";
}

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}
    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

}  // namespace modlock

template <>
struct std::hash<modlock::RequestId> {
    std::size_t operator()(modlock::RequestId r) const noexcept { return std::hash<std::uint64_t>{}(r.value); }
};
