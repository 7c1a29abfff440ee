#pragma once

#include <chrono>
#include <cstdint>

namespace srw {

/// UTC wall-clock timestamp, integer milliseconds since the Unix epoch.
using EpochMs = std::int64_t;

using SteadyClock = std::chrono::steady_clock;
using SteadyTime = SteadyClock::time_point;

inline EpochMs now_epoch_ms() {
  using namespace std::chrono;
  return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

inline double elapsed_ms(SteadyTime since, SteadyTime until = SteadyClock::now()) {
  return std::chrono::duration<double, std::milli>(until - since).count();
}

}  // namespace srw
