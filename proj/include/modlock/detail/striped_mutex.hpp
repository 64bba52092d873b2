#pragma once
#include <array>
#include <cstddef>
#include <mutex>

namespace modlock::detail {

// Fixed pool of mutexes; per-lock state is guarded by stripe (lock % N).
class StripedMutex {
public:
    static constexpr std::size_t kStripes = 64;

    std::mutex& for_index(std::size_t i) const { return stripes_[i % kStripes]; }

private:
    mutable std::array<std::mutex, kStripes> stripes_;
};

}  // namespace modlock::detail
