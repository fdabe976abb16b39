#pragma once

#include <functional>
#include <vector>

#include "manifold_mcmc/errors.hpp"

namespace manifold_mcmc {

/// Gauss-Legendre nodes and weights on [-1, 1].
struct GaussLegendreRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// Computes the n-point rule by Newton iteration on the Legendre polynomial.
GaussLegendreRule gauss_legendre(int n);

/// Adaptive composite Gauss-Legendre integral of f over [a, b].
double integrate(const std::function<double(double)>& f, double a, double b,
                 int order = 32, double rel_tol = 1e-12);

/// Normalizer, first two moments and a dense CDF table for a 1-D
/// unnormalized log-density, integrated over [-8, 8].
struct DensitySummary {
  double normalizer = 0.0;  // Z
  double mean = 0.0;
  double variance = 0.0;
  double lo = -8.0;
  double hi = 8.0;
  std::vector<double> cdf_grid;  // cdf at lo + i*(hi-lo)/(n-1)

  /// CDF lookup with linear interpolation between grid points.
  double cdf(double x) const;
};

/// Integrates exp(log_density) on [-8, 8]; the CDF table has `grid_points`
/// entries. Throws NonIntegrable when the boundary density relative to Z
/// exceeds 1e-10 (mass escaping the window).
DensitySummary summarize_density_1d(
    const std::function<double(double)>& log_density, int order = 64,
    int grid_points = 4097);

}  // namespace manifold_mcmc
