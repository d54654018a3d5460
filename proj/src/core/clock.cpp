#include "ecig/core/clock.hpp"

#include <chrono>

namespace ecig {

std::int64_t SystemClock::now_ms() const {
  const auto wall = std::chrono::duration_cast<std::chrono::milliseconds>(
                        std::chrono::system_clock::now().time_since_epoch())
                        .count();
  std::int64_t prev = last_.load();
  while (wall > prev && !last_.compare_exchange_weak(prev, wall)) {
  }
  return wall > prev ? wall : prev;
}

const Clock& system_clock() {
  static SystemClock clock;
  return clock;
}

}  // namespace ecig
