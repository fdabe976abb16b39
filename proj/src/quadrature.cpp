#include "manifold_mcmc/quadrature.hpp"

#include <cmath>

namespace manifold_mcmc {

GaussLegendreRule gauss_legendre(int n) {
  GaussLegendreRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  const int m = (n + 1) / 2;
  for (int i = 0; i < m; ++i) {
    // Chebyshev-based initial guess, then Newton on P_n.
    double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double pp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = 0.0;
      for (int j = 0; j < n; ++j) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j + 1.0) * x * p1 - j * p2) / (j + 1.0);
      }
      pp = n * (x * p0 - p1) / (x * x - 1.0);
      const double dx = p0 / pp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    rule.nodes[i] = -x;
    rule.nodes[n - 1 - i] = x;
    rule.weights[i] = 2.0 / ((1.0 - x * x) * pp * pp);
    rule.weights[n - 1 - i] = rule.weights[i];
  }
  return rule;
}

namespace {

double panel(const std::function<double(double)>& f, double a, double b,
             const GaussLegendreRule& rule) {
  const double c = 0.5 * (a + b);
  const double h = 0.5 * (b - a);
  double sum = 0.0;
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
    sum += rule.weights[i] * f(c + h * rule.nodes[i]);
  }
  return h * sum;
}

double adaptive(const std::function<double(double)>& f, double a, double b,
                const GaussLegendreRule& rule, double whole, double tol,
                int depth) {
  const double mid = 0.5 * (a + b);
  const double left = panel(f, a, mid, rule);
  const double right = panel(f, mid, b, rule);
  const double err = std::abs(left + right - whole);
  if (depth <= 0 || err <= tol * (std::abs(left + right) + 1e-300)) {
    return left + right;
  }
  return adaptive(f, a, mid, rule, left, tol, depth - 1) +
         adaptive(f, mid, b, rule, right, tol, depth - 1);
}

}  // namespace

double integrate(const std::function<double(double)>& f, double a, double b,
                 int order, double rel_tol) {
  const GaussLegendreRule rule = gauss_legendre(order);
  return adaptive(f, a, b, rule, panel(f, a, b, rule), rel_tol, 24);
}

double DensitySummary::cdf(double x) const {
  if (x <= lo) return 0.0;
  if (x >= hi) return 1.0;
  const std::size_t n = cdf_grid.size();
  const double t = (x - lo) / (hi - lo) * static_cast<double>(n - 1);
  const std::size_t i =
      std::min(static_cast<std::size_t>(t), n - 2);
  const double frac = t - static_cast<double>(i);
  return cdf_grid[i] + frac * (cdf_grid[i + 1] - cdf_grid[i]);
}

DensitySummary summarize_density_1d(
    const std::function<double(double)>& log_density, int order,
    int grid_points) {
  DensitySummary out;
  auto f = [&](double x) { return std::exp(log_density(x)); };

  out.normalizer = integrate(f, out.lo, out.hi, order);
  if (!(out.normalizer > 0.0) || !std::isfinite(out.normalizer)) {
    throw NonIntegrable("density integral is not finite and positive");
  }
  const double boundary = (f(out.lo) + f(out.hi)) / out.normalizer;
  if (boundary > 1e-10) {
    throw NonIntegrable("density mass at the integration boundary: " +
                        std::to_string(boundary));
  }

  const double m1 =
      integrate([&](double x) { return x * f(x); }, out.lo, out.hi, order);
  const double m2 =
      integrate([&](double x) { return x * x * f(x); }, out.lo, out.hi, order);
  out.mean = m1 / out.normalizer;
  out.variance = m2 / out.normalizer - out.mean * out.mean;

  // Cumulative table: one fixed-order panel per cell is ample at this
  // resolution.
  const GaussLegendreRule cell_rule = gauss_legendre(16);
  out.cdf_grid.assign(grid_points, 0.0);
  const double h = (out.hi - out.lo) / static_cast<double>(grid_points - 1);
  double acc = 0.0;
  const double c = 0.5 * h;
  for (int i = 1; i < grid_points; ++i) {
    const double a = out.lo + h * (i - 1);
    const double mid = a + c;
    double s = 0.0;
    for (std::size_t k = 0; k < cell_rule.nodes.size(); ++k) {
      s += cell_rule.weights[k] * f(mid + c * cell_rule.nodes[k]);
    }
    acc += c * s;
    out.cdf_grid[i] = acc;
  }
  const double total = out.cdf_grid.back();
  for (double& v : out.cdf_grid) v /= total;
  return out;
}

}  // namespace manifold_mcmc
