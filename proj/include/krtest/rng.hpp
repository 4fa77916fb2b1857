#pragma once

#include <cstdint>
#include <string_view>

#include "krtest/hash.hpp"

namespace krtest {

// splitmix64 finalizer; full-avalanche mixing for counter-based derivations.
inline uint64_t mix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Small deterministic generator. std::mt19937 + std::shuffle would be
// implementation-defined across standard libraries; artifacts must not be.
class SplitMix64 {
 public:
  explicit SplitMix64(uint64_t seed) : state_(seed) {}

  uint64_t next() {
    state_ += 0x9E3779B97F4A7C15ULL;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double next_double() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Uniform in [lo, hi).
  double next_double(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // Uniform in [0, n).
  uint64_t next_below(uint64_t n) {
    // Rejection-free modulo is fine at these scales; bias is < n / 2^64.
    return next() % n;
  }

 private:
  uint64_t state_;
};

// One fair coin derived from (seed, key). Counter-based: inserting or removing
// other keys never changes this key's outcome.
inline bool derived_coin(uint64_t seed, std::string_view key) {
  return (mix64(seed ^ fnv1a64(key)) & 1ULL) != 0;
}

}  // namespace krtest
