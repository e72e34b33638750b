#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace morlbench {

/// Deterministic random stream (xoshiro256** seeded via splitmix64).
/// Every stochastic component in the library draws from one of these so
/// that runs are bit-reproducible for a fixed master seed. Child streams
/// derived with derive() are statistically independent and stable across
/// call order.
class Rng {
 public:
  explicit Rng(uint64_t seed);

  uint64_t next_u64();

  /// Uniform in [0, 1).
  double uniform();
  /// Uniform in [lo, hi).
  double uniform(double lo, double hi);
  /// Uniform integer in [0, n). Requires n >= 1.
  int uniform_int(int n);
  /// Gaussian via Box-Muller; consumes exactly two uniforms per draw.
  double normal(double mean = 0.0, double stddev = 1.0);

  /// Child stream keyed by a label; independent of how many numbers this
  /// stream has produced so far.
  Rng derive(std::string_view key) const;
  Rng derive(uint64_t key) const;

  uint64_t seed() const { return seed_; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(uniform_int(static_cast<int>(i)));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  uint64_t seed_ = 0;
  uint64_t s_[4] = {0, 0, 0, 0};
};

/// FNV-1a over bytes; used for seed derivation and config hashing.
uint64_t fnv1a64(std::string_view bytes);

}  // namespace morlbench
