#pragma once

#include <cstdint>
#include <cmath>
#include <string_view>

namespace dqsb {

// SplitMix64. Small, fast, and bit-identical on every platform, which the
// replay guarantees depend on. One independent stream per (purpose, node)
// keeps draw sequences insensitive to event interleaving.
struct Rng {
  std::uint64_t state = 0x9e3779b97f4a7c15ull;

  explicit Rng(std::uint64_t seed = 0) : state(seed ^ 0x9e3779b97f4a7c15ull) {}

  std::uint64_t next() {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return next() % n; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Inverse-CDF exponential with the given mean, truncated to [lo, hi].
  double exponential_trunc(double mean, double lo, double hi) {
    double a = 1.0 - std::exp(-lo / mean);
    double b = 1.0 - std::exp(-hi / mean);
    double u = a + (b - a) * uniform();
    return -mean * std::log(1.0 - u);
  }
};

inline std::uint64_t hash_mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ull + (b << 6) + (b >> 2);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline std::uint64_t hash_str(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (char c : s) { h ^= static_cast<unsigned char>(c); h *= 0x100000001b3ull; }
  return h;
}

// Seed for a named per-node stream derived from the run seed.
inline std::uint64_t stream_seed(std::uint64_t run_seed, std::string_view purpose, int node) {
  return hash_mix(hash_mix(run_seed, hash_str(purpose)), static_cast<std::uint64_t>(node) + 0x5bd1e995ull);
}

// Stateless per-(frame, receiver) draw used for link loss, replayable and
// independent of event processing order.
inline bool loss_draw_pass(std::uint64_t run_seed, std::uint64_t frame_seq, int receiver, double loss_rate) {
  if (loss_rate <= 0.0) return true;
  std::uint64_t h = hash_mix(hash_mix(run_seed, frame_seq ^ 0xa0761d6478bd642full),
                             static_cast<std::uint64_t>(receiver) + 0xe7037ed1a0b428dbull);
  double u = static_cast<double>(h >> 11) * 0x1.0p-53;
  return u >= loss_rate;
}

}  // namespace dqsb
