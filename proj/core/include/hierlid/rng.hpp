#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

namespace hierlid {

namespace detail {

// Finalizer from splitmix64; full-avalanche bijection on 64 bits.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace detail

/// Counter-based pseudo-random generator: output i is a mix of (key, i).
/// Streams for parallel work are derived as key = seed ^ stream_index, so
/// replicate streams never share state and results do not depend on
/// scheduling. Distribution sampling is implemented here rather than with
/// <random> adaptors so sequences are identical across standard libraries.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  explicit CounterRng(std::uint64_t key) : key_(key) {}

  static CounterRng stream(std::uint64_t seed, std::uint64_t stream_index) {
    return CounterRng(seed ^ stream_index);
  }

  /// Independent generator for a named sub-purpose (tag is any constant).
  CounterRng fork(std::uint64_t tag) const {
    return CounterRng(detail::mix64(key_ ^ detail::mix64(tag)));
  }

  result_type operator()() { return detail::mix64(key_ + 0x9e3779b97f4a7c15ULL * ++counter_); }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n) {
    // Multiply-shift bounded draw; bias < 2^-64 * n, negligible here.
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>((*this)()) * n) >> 64);
  }

  /// Standard normal via Box-Muller; the spare value is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    // Guard log(0).
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  /// Poisson count by summing unit-exponential arrivals until they pass
  /// lambda; O(lambda) draws, exact for any non-negative lambda.
  std::uint64_t poisson(double lambda) {
    if (!(lambda > 0.0)) return 0;
    std::uint64_t k = 0;
    double t = 0.0;
    for (;;) {
      double u = uniform();
      while (u <= 0.0) u = uniform();
      t -= std::log(u);
      if (t >= lambda) return k;
      ++k;
    }
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace hierlid
