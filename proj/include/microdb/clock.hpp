#pragma once

#include <chrono>
#include <cstdint>
#include <stdexcept>

namespace microdb {

// All engine time flows through this interface so simulated runs can supply
// a virtual clock and never touch the wall clock.
class Clock {
 public:
  virtual ~Clock() = default;
  virtual std::int64_t now_ns() const = 0;
};

class WallClock final : public Clock {
 public:
  std::int64_t now_ns() const override {
    using namespace std::chrono;
    return duration_cast<nanoseconds>(system_clock::now().time_since_epoch())
        .count();
  }
};

class VirtualClock final : public Clock {
 public:
  explicit VirtualClock(std::int64_t start_ns = 0) : now_(start_ns) {}

  std::int64_t now_ns() const override { return now_; }

  void advance_to(std::int64_t t_ns) {
    if (t_ns > now_) now_ = t_ns;
  }

 private:
  std::int64_t now_;
};

// Throws on any read; tests plant it where wall time must never be consulted.
class PoisonClock final : public Clock {
 public:
  std::int64_t now_ns() const override {
    throw std::logic_error("wall clock read inside a simulated run");
  }
};

}  // namespace microdb
