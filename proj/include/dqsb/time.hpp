#pragma once

#include <cstdint>
#include <compare>
#include <cmath>

namespace dqsb {

// Simulation time and durations in integer microseconds. All protocol
// arithmetic (send times, backoffs, overlaps) closes over integer ticks,
// so replay is bit-exact and same-tick ordering is well defined.
struct Time {
  std::int64_t us = 0;

  constexpr Time() = default;
  constexpr explicit Time(std::int64_t ticks) : us(ticks) {}

  static constexpr Time zero() { return Time{0}; }
  static constexpr Time usec(std::int64_t v) { return Time{v}; }
  static constexpr Time msec(std::int64_t v) { return Time{v * 1000}; }
  static constexpr Time seconds(std::int64_t v) { return Time{v * 1000000}; }
  static Time from_seconds(double s) {
    return Time{static_cast<std::int64_t>(std::llround(s * 1e6))};
  }

  double sec() const { return static_cast<double>(us) * 1e-6; }

  constexpr auto operator<=>(const Time&) const = default;

  constexpr Time operator+(Time o) const { return Time{us + o.us}; }
  constexpr Time operator-(Time o) const { return Time{us - o.us}; }
  constexpr Time& operator+=(Time o) { us += o.us; return *this; }
  constexpr Time& operator-=(Time o) { us -= o.us; return *this; }
  constexpr Time operator*(std::int64_t k) const { return Time{us * k}; }
};

constexpr Time max_time(Time a, Time b) { return a < b ? b : a; }
constexpr Time min_time(Time a, Time b) { return a < b ? a : b; }

}  // namespace dqsb
