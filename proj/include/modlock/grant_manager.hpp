#pragma once
/**
 * Grant manager: tells clients the outcome of their acquisitions, either
 * by pushing a message to each client's component or by holding the
 * outcome until the client polls for it.
 */
#include <algorithm>
#include <cstdint>
#include <mutex>
#include <unordered_map>
#include <variant>
#include <vector>

#include "modlock/core_types.hpp"

namespace modlock {

struct PushMode {
    friend bool operator==(PushMode, PushMode) = default;
};

/// Geometric backoff between polls: interval, interval*multiplier, ...
/// capped at max_interval.
struct PollMode {
    SimTime interval = from_micros(2.0);
    double multiplier = 2.0;
    SimTime max_interval = from_micros(64.0);
    friend bool operator==(PollMode, PollMode) = default;

    /// Delay before poll number `attempt` (0-based) after a Queued reply.
    SimTime delay(std::uint32_t attempt) const {
        double d = static_cast<double>(interval);
        for (std::uint32_t i = 0; i < attempt && d < static_cast<double>(max_interval); ++i) d *= multiplier;
        return std::min(static_cast<SimTime>(d), std::max(max_interval, interval));
    }
};

using NotificationMode = std::variant<PushMode, PollMode>;

enum class GrantOutcome : std::uint8_t { Granted, Queued };
enum class PollResult : std::uint8_t { Granted, Pending };

struct GrantNotice {
    RequestId request{};
    ClientId client{};
    LockId lock{};
    GrantOutcome outcome = GrantOutcome::Granted;
    friend bool operator==(const GrantNotice&, const GrantNotice&) = default;
};

struct GrantMessage {
    GrantNotice notice;
    ComponentId target{};
    friend bool operator==(const GrantMessage&, const GrantMessage&) = default;
};

class GrantManager {
public:
    GrantManager(NotificationMode mode, std::size_t num_components) : mode_(mode), num_components_(num_components) {}

    const NotificationMode& mode() const { return mode_; }
    bool is_push() const { return std::holds_alternative<PushMode>(mode_); }

    /// One message per distinct target component.
    std::vector<GrantMessage> notify(const GrantNotice& notice, std::vector<ComponentId> targets) const {
        if (!is_push()) throw Error(Errc::WrongNotificationMode, "notify requires push mode");
        std::sort(targets.begin(), targets.end());
        targets.erase(std::unique(targets.begin(), targets.end()), targets.end());
        std::vector<GrantMessage> out;
        out.reserve(targets.size());
        for (ComponentId t : targets) {
            if (t.value >= num_components_)
                throw Error(Errc::UnknownComponent, "component " + std::to_string(t.value));
            out.push_back({notice, t});
        }
        return out;
    }

    /// Granted is terminal: a later Queued record does not downgrade it.
    void record_grant(const GrantNotice& notice) {
        std::scoped_lock guard(mu_);
        auto [it, inserted] = outcomes_.try_emplace(notice.request, notice.outcome);
        if (!inserted && notice.outcome == GrantOutcome::Granted) it->second = GrantOutcome::Granted;
    }

    PollResult poll(ClientId client, RequestId request) {
        if (is_push()) throw Error(Errc::WrongNotificationMode, "poll requires poll mode");
        std::scoped_lock guard(mu_);
        auto it = outcomes_.find(request);
        if (it == outcomes_.end())
            throw Error(Errc::UnknownRequest,
                        "request " + std::to_string(request.value) + " from client " + std::to_string(client.id));
        ++poll_ops_;
        return it->second == GrantOutcome::Granted ? PollResult::Granted : PollResult::Pending;
    }

    /// Drops a request the client has finished with.
    void forget(RequestId request) {
        std::scoped_lock guard(mu_);
        outcomes_.erase(request);
    }

    std::uint64_t poll_ops() const {
        std::scoped_lock guard(mu_);
        return poll_ops_;
    }

private:
    NotificationMode mode_;
    std::size_t num_components_;
    mutable std::mutex mu_;
    std::unordered_map<RequestId, GrantOutcome> outcomes_;
    std::uint64_t poll_ops_ = 0;
};

}  // namespace modlock
