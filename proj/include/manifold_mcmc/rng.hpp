#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace manifold_mcmc {

/// Seedable deterministic generator used by every stochastic operation.
///
/// All variate transforms are implemented here rather than through
/// std::<distribution> types so that the draw sequence for a given seed is
/// fixed by this library, not by the standard library vendor. One Rng is
/// owned per chain and never shared.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t raw() { return engine_(); }

  /// Uniform on (0,1), never returning an exact endpoint.
  double uniform() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Uniform integer on {0, ..., n-1}.
  int uniform_int(int n) {
    int k = static_cast<int>(uniform() * n);
    return k < n ? k : n - 1;
  }

  /// Standard normal via Box-Muller (two engine draws per variate).
  double normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi() * u2);
  }

  /// Gamma(shape, scale=1) by Marsaglia-Tsang squeeze.
  double gamma(double shape) {
    if (shape < 1.0) {
      const double u = uniform();
      return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x = normal();
      double v = 1.0 + c * x;
      if (v <= 0.0) continue;
      v = v * v * v;
      const double u = uniform();
      if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) {
        return d * v;
      }
    }
  }

  /// Chi-square with (possibly fractional) dof k > 0.
  double chi_square(double k) { return 2.0 * gamma(0.5 * k); }

  /// splitmix64 finalizer; used to derive independent sub-seeds.
  static std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
  }

  /// Deterministic, collision-free sub-seed for chain `stream`.
  static std::uint64_t sub_seed(std::uint64_t master, std::uint64_t stream) {
    return splitmix64(master + 0x9E3779B97F4A7C15ULL * (stream + 1));
  }

  static constexpr double two_pi() { return 6.283185307179586476925286766559; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace manifold_mcmc
