#pragma once

#include <cstdint>

namespace atelasso {

/// SplitMix64 finalizer: bijective 64-bit mix.
inline std::uint64_t mix64(std::uint64_t x) {
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Combine a seed with a tag (replication index, purpose id) into a new seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
  return mix64(seed + 0x632be59bd9b4e019ULL * (tag + 1));
}

/// Counter-based uniform stream. Output i is a pure function of
/// (seed, stream, i): no platform-dependent state, so any draw can be
/// reproduced in isolation and streams can be split freely across workers.
///
/// Variates are produced by inverse-CDF transforms of the uniform stream,
/// which keeps results bit-identical across platforms and thread counts.
class CounterRng {
public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0)
      : key_(mix64(mix64(seed) ^ (0xda942042e4dd58b5ULL * (stream + 1)))) {}

  std::uint64_t next_u64() {
    return mix64(key_ + 0x9e3779b97f4a7c15ULL * ++counter_);
  }

  /// Uniform on the open interval (0, 1).
  double next_uniform() {
    const double u = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    return u > 0.0 ? u : 0x1.0p-53;
  }

  /// Standard normal via the inverse CDF.
  double next_normal();

  /// Student t with `dof` degrees of freedom: Z0 / sqrt(chi2_dof / dof).
  double next_student_t(int dof);

  /// Unbiased integer in [0, n); n must be positive.
  std::uint64_t next_below(std::uint64_t n) {
    const std::uint64_t limit = ~0ULL - ~0ULL % n;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace atelasso
