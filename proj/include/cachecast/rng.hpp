#pragma once

#include <cstdint>

namespace cachecast {

/// Counter-based 64-bit generator (SplitMix64). Draw i is a pure function of
/// (seed, i), so streams replay bit-identically on any platform; no libc or
/// libstdc++ distribution is involved anywhere randomness matters.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1) with 53 random bits.
  double next_unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Uniform in [-s, s].
  double next_symmetric(double s) { return (2.0 * next_unit() - 1.0) * s; }

  /// Uniform integer in [0, bound); bound must be nonzero.
  std::uint64_t next_below(std::uint64_t bound) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next()) * bound) >> 64);
  }

 private:
  std::uint64_t state_;
};

}  // namespace cachecast
