#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace embfuse {

/// Seeded, splittable random source.
///
/// Distributions are implemented here rather than through <random>'s
/// distribution classes, whose output is implementation-defined; draws are
/// therefore identical across standard libraries for a given seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  /// Independent child stream keyed by `stream`; the parent is not advanced.
  [[nodiscard]] Rng split(std::uint64_t stream) const;

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Unbiased integer in [0, bound).
  std::uint64_t below(std::uint64_t bound);
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }
  bool bernoulli(double p) { return uniform() < p; }

  template <typename T>
  void shuffle(std::span<T> values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(values[i - 1], values[j]);
    }
  }
  template <typename T>
  void shuffle(std::vector<T>& values) {
    shuffle(std::span<T>(values));
  }

  [[nodiscard]] std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);

/// FNV-1a over bytes; stable across platforms, used for config and corpus hashes.
std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace embfuse
