#pragma once

#include <cstdint>
#include <cmath>
#include <random>
#include <vector>

namespace esage {

// splitmix64 finalizer; used to derive well-separated streams from (seed, tag).
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix64(std::uint64_t a, std::uint64_t b) {
  return mix64(mix64(a) + 0x9e3779b97f4a7c15ULL + b);
}

// Deterministic RNG. All transforms are spelled out here so that streams are
// identical across standard libraries; std::*_distribution is never used.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(mix64(seed)) {}
  Rng(std::uint64_t seed, std::uint64_t stream) : gen_(mix64(seed, stream)) {}

  std::uint64_t bits() { return gen_(); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n); n must be positive.
  std::uint64_t below(std::uint64_t n) {
    // Multiply-shift; bias is negligible for the n used here (< 2^32).
    return static_cast<std::uint64_t>(
        (static_cast<__uint128_t>(gen_()) * n) >> 64);
  }

  // Standard normal via Box-Muller (cached pair).
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  bool bernoulli(double p) { return uniform() < p; }

  // Geometric gap for skip-sampling a Bernoulli(p) stream: the number of
  // consecutive failures before the next success. Requires 0 < p < 1.
  std::uint64_t skip_gap(double p) {
    double u = uniform();
    while (u <= 0.0) u = uniform();
    return static_cast<std::uint64_t>(std::log(u) / std::log1p(-p));
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

  // First k elements of a seeded permutation of v (partial Fisher-Yates).
  template <typename T>
  std::vector<T> sample(std::vector<T> v, std::size_t k) {
    if (k > v.size()) k = v.size();
    for (std::size_t i = 0; i < k; ++i) {
      std::swap(v[i], v[i + below(v.size() - i)]);
    }
    v.resize(k);
    return v;
  }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace esage
