#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace radloc {

struct RngSeed {
  std::uint64_t value = 0;
};

/// Stable 64-bit mixing of a base seed with stream tags (splitmix64 finaliser chain).
/// Used to derive independent sub-streams, e.g. scenario placement vs. range noise.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags) noexcept;

/// Portable generator: mt19937_64 is fully specified by the standard, and the
/// uniform/normal transforms below are ours, so draws are identical on every platform.
class Rng {
 public:
  explicit Rng(RngSeed seed) : engine_(seed.value) {}
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal, Marsaglia polar method.
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// Uniform integer in [0, n).
  std::uint64_t index(std::uint64_t n);

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace radloc
