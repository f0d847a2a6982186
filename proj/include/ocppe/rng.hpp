#pragma once

#include <cstdint>

#include "ocppe/math.hpp"

namespace ocppe {

// splitmix64 finalizer: full-avalanche 64-bit mix.
inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// splitmix64 step; used to expand a key into generator state.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  return mix64(state += 0x9e3779b97f4a7c15ULL);
}

// xoshiro256++ with the state expanded from a fully mixed (seed, id0, id1)
// key: an avalanche pass between each component, so nearby ids or seeds give
// unrelated streams. Any draw/replication can be reproduced in isolation and
// thread scheduling cannot change results.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t id0 = 0, std::uint64_t id1 = 0) {
    std::uint64_t k = mix64(seed + 0x9e3779b97f4a7c15ULL);
    k = mix64(k + id0 * 0xbf58476d1ce4e5b9ULL + 0x9e3779b97f4a7c15ULL);
    k = mix64(k + id1 * 0x94d049bb133111ebULL + 0x9e3779b97f4a7c15ULL);
    for (auto& s : state_) s = splitmix64(k);
  }

  std::uint64_t next() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform on the open interval (0,1); never returns an exact endpoint.
  double uniform() {
    return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53;
  }

  // Standard normal via the inverse CDF; deterministic across platforms,
  // unlike std::normal_distribution.
  double normal() { return norm_quantile(uniform()); }

  double rademacher() { return (next() >> 63) ? 1.0 : -1.0; }

  // Mammen two-point multiplier: mean 0, variance 1.
  double mammen() {
    static const double s5 = std::sqrt(5.0);
    static const double lo = -(s5 - 1.0) / 2.0;
    static const double hi = (s5 + 1.0) / 2.0;
    static const double p_lo = (s5 + 1.0) / (2.0 * s5);
    return (uniform() < p_lo) ? lo : hi;
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }
  std::uint64_t state_[4];
};

}  // namespace ocppe
