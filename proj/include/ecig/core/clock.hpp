#pragma once

#include <atomic>
#include <cstdint>

namespace ecig {

// Milliseconds since the Unix epoch. Implementations never go backwards.
class Clock {
 public:
  virtual ~Clock() = default;
  virtual std::int64_t now_ms() const = 0;
};

// Wall clock clamped to be non-decreasing.
class SystemClock final : public Clock {
 public:
  std::int64_t now_ms() const override;

 private:
  mutable std::atomic<std::int64_t> last_{0};
};

class ManualClock final : public Clock {
 public:
  explicit ManualClock(std::int64_t start_ms = 1'700'000'000'000) : now_(start_ms) {}

  std::int64_t now_ms() const override { return now_.load(); }
  void set(std::int64_t ms) { now_.store(ms); }
  void advance(std::int64_t ms) { now_.fetch_add(ms); }

 private:
  std::atomic<std::int64_t> now_;
};

// Process-wide default used when callers do not inject a clock.
const Clock& system_clock();

}  // namespace ecig
