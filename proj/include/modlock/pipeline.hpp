#pragma once
/**
 * Pipeline steps of the acquire and release flows, per-request traces and
 * the static step graph traces are checked against.
 *
 * Branches that run in parallel (the reply and the metadata update of an
 * acquisition, the grant notification and the release completion) may
 * finish in either order, so both directions are legal edges.
 */
#include <algorithm>
#include <array>
#include <cstdint>
#include <string_view>
#include <utility>
#include <vector>

#include "modlock/core_types.hpp"

namespace modlock {

enum class PipelineStep : std::uint8_t {
    DecideAtMode,
    ReplyViaGrant,
    AddHolder,
    EnqueueWaiter,
    RemoveHolder,
    SelectWaiters,
    PromoteHolders,
    ValidateMode,
    NotifyGranted,
    AbortRollback,
    ResetToFree,
    FinishRelease,
};

inline constexpr std::size_t kNumSteps = 12;

constexpr std::string_view to_string(PipelineStep s) {
    constexpr std::array<std::string_view, kNumSteps> names{
        "DecideAtMode",  "ReplyViaGrant", "AddHolder",     "EnqueueWaiter", "RemoveHolder", "SelectWaiters",
        "PromoteHolders", "ValidateMode", "NotifyGranted", "AbortRollback", "ResetToFree",  "FinishRelease"};
    return names[static_cast<std::size_t>(s)];
}

struct TraceEntry {
    PipelineStep step;
    ComponentId component;
    SimTime time;
    friend bool operator==(const TraceEntry&, const TraceEntry&) = default;
};

struct PipelineTrace {
    RequestId request{};
    LockId lock{};
    std::vector<TraceEntry> steps;

    std::vector<PipelineStep> step_sequence() const {
        std::vector<PipelineStep> out;
        out.reserve(steps.size());
        for (const auto& e : steps) out.push_back(e.step);
        return out;
    }
};

using StepEdge = std::pair<PipelineStep, PipelineStep>;

inline const std::vector<StepEdge>& transition_relation() {
    using S = PipelineStep;
    static const std::vector<StepEdge> edges = [] {
        std::vector<StepEdge> e{
            {S::DecideAtMode, S::ReplyViaGrant},   {S::DecideAtMode, S::AddHolder},
            {S::DecideAtMode, S::EnqueueWaiter},   {S::ReplyViaGrant, S::AddHolder},
            {S::AddHolder, S::ReplyViaGrant},      {S::ReplyViaGrant, S::EnqueueWaiter},
            {S::EnqueueWaiter, S::ReplyViaGrant},  {S::RemoveHolder, S::SelectWaiters},
            {S::SelectWaiters, S::PromoteHolders}, {S::SelectWaiters, S::ResetToFree},
            {S::PromoteHolders, S::ValidateMode},  {S::ValidateMode, S::NotifyGranted},
            {S::ValidateMode, S::FinishRelease},   {S::ValidateMode, S::AbortRollback},
            {S::NotifyGranted, S::FinishRelease},  {S::FinishRelease, S::NotifyGranted},
            {S::AbortRollback, S::FinishRelease},  {S::ResetToFree, S::FinishRelease},
            {S::ResetToFree, S::SelectWaiters},
        };
        std::sort(e.begin(), e.end());
        return e;
    }();
    return edges;
}

inline bool is_legal_transition(PipelineStep from, PipelineStep to) {
    const auto& e = transition_relation();
    return std::binary_search(e.begin(), e.end(), StepEdge{from, to});
}

/// A complete trace of one pipeline: starts at DecideAtMode or
/// RemoveHolder, follows legal edges, and ends where the flow ends.
inline bool is_valid_trace(const std::vector<PipelineStep>& seq) {
    using S = PipelineStep;
    if (seq.empty()) return false;
    for (std::size_t i = 1; i < seq.size(); ++i)
        if (!is_legal_transition(seq[i - 1], seq[i])) return false;

    auto count = [&](S s) { return std::count(seq.begin(), seq.end(), s); };
    if (seq.front() == S::DecideAtMode) {
        if (seq.size() != 3 || count(S::ReplyViaGrant) != 1) return false;
        return (count(S::AddHolder) == 1) != (count(S::EnqueueWaiter) == 1);
    }
    if (seq.front() != S::RemoveHolder) return false;
    if (seq.size() == 1) return true;
    if (count(S::RemoveHolder) != 1 || count(S::FinishRelease) != 1) return false;
    if (count(S::ValidateMode) > 0) {
        bool notified = count(S::NotifyGranted) == 1, aborted = count(S::AbortRollback) == 1;
        if (notified == aborted || count(S::PromoteHolders) != 1) return false;
        return seq.back() == S::FinishRelease || seq.back() == S::NotifyGranted;
    }
    return seq.back() == S::FinishRelease && count(S::NotifyGranted) == 0;
}

}  // namespace modlock
