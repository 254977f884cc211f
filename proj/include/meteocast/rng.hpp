#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace meteo {

/// Seeded random stream with a fixed, documented algorithm so that every
/// draw sequence is bit-reproducible across platforms and processes.
///
/// Engine: std::mt19937_64 (fully specified by the C++ standard).
/// Uniform doubles: top 53 bits of the next engine output, in [0,1).
/// Normals: Box-Muller on two uniforms, second value cached.
/// Bounded integers: multiply-shift reduction of one engine output.
///
/// Standard-library distributions are never used; their output is not
/// specified and would break cross-platform reproducibility.
class RngStream {
 public:
  static constexpr const char* kAlgorithm = "mt19937_64/u53/box-muller/v1";

  explicit RngStream(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0,1), 53-bit resolution.
  double next_uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Standard normal via Box-Muller; consumes two uniforms per pair.
  double next_normal();

  /// Uniform integer in [0, n), n > 0.
  std::uint64_t next_below(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<__uint128_t>(engine_()) * static_cast<__uint128_t>(n)) >> 64);
  }

  bool next_bernoulli(double p) { return next_uniform() < p; }

  /// Fisher-Yates shuffle driven by this stream.
  template <class T>
  void shuffle(std::vector<T>& values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(next_below(i));
      std::swap(values[i - 1], values[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace meteo
