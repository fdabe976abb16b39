#include "manifold_mcmc/diagnostics.hpp"

#include <algorithm>
#include <cmath>

namespace manifold_mcmc {

double ess_series(const std::vector<double>& x) {
  const std::size_t n = x.size();
  if (n < 2) return 0.0;
  const double nd = static_cast<double>(n);

  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= nd;

  double c0 = 0.0;
  for (double v : x) c0 += (v - mean) * (v - mean);
  c0 /= nd;
  if (!(c0 > 0.0)) return 0.0;  // constant series

  auto acov = [&](std::size_t t) {
    double c = 0.0;
    for (std::size_t i = 0; i + t < n; ++i) {
      c += (x[i] - mean) * (x[i + t] - mean);
    }
    return c / nd;
  };

  double rho_sum = 0.0;
  for (std::size_t t = 1; t + 1 < n; t += 2) {
    const double pair = (acov(t) + acov(t + 1)) / c0;
    if (pair <= 0.0) break;
    rho_sum += pair;
  }
  const double ess = nd / (1.0 + 2.0 * rho_sum);
  return std::clamp(ess, 0.0, nd);
}

double ess(const Trace& trace, int coordinate) {
  if (trace.length() < 100) {
    throw TraceTooShort("ess needs at least 100 states, trace has " +
                        std::to_string(trace.length()));
  }
  if (coordinate < 0 || coordinate >= trace.dim()) {
    throw DimensionMismatch("ess: coordinate out of range");
  }
  std::vector<double> x(trace.length());
  for (std::size_t i = 0; i < trace.length(); ++i) {
    x[i] = trace.states[i][coordinate];
  }
  return ess_series(x);
}

namespace {

std::size_t burn_start(const Trace& trace, double burn_in) {
  if (!(burn_in >= 0.0) || burn_in >= 1.0) {
    throw ValidationError("burn_in", "must be in [0, 1)");
  }
  return static_cast<std::size_t>(burn_in * static_cast<double>(trace.length()));
}

}  // namespace

Moments moments(const Trace& trace, double burn_in) {
  const std::size_t start = burn_start(trace, burn_in);
  const std::size_t m = trace.length() - start;
  if (m < 100) {
    throw TraceTooShort("moments needs >= 100 post-burn-in states, has " +
                        std::to_string(m));
  }
  const int d = trace.dim();
  const double md = static_cast<double>(m);

  Moments out;
  out.mean = Eigen::VectorXd::Zero(d);
  for (std::size_t i = start; i < trace.length(); ++i) {
    out.mean += trace.states[i];
  }
  out.mean /= md;

  out.covariance = Eigen::MatrixXd::Zero(d, d);
  for (std::size_t i = start; i < trace.length(); ++i) {
    const Eigen::VectorXd r = trace.states[i] - out.mean;
    out.covariance += r * r.transpose();
  }
  out.covariance /= (md - 1.0);

  out.mcse = Eigen::VectorXd::Zero(d);
  std::vector<double> x(m);
  for (int c = 0; c < d; ++c) {
    for (std::size_t i = 0; i < m; ++i) x[i] = trace.states[start + i][c];
    const double e = ess_series(x);
    const double sd = std::sqrt(out.covariance(c, c));
    out.mcse[c] = e > 0.0 ? sd / std::sqrt(e) : INFINITY;
  }
  return out;
}

double ks_statistic_1d(const Trace& trace,
                       const std::function<double(double)>& cdf,
                       double burn_in) {
  if (trace.dim() != 1) {
    throw DimensionMismatch("ks_statistic_1d requires a 1-D trace");
  }
  const std::size_t start = burn_start(trace, burn_in);
  const std::size_t m = trace.length() - start;
  if (m < 1) throw TraceTooShort("ks_statistic_1d: empty post-burn-in trace");

  std::vector<double> x(m);
  for (std::size_t i = 0; i < m; ++i) x[i] = trace.states[start + i][0];
  std::sort(x.begin(), x.end());

  const double md = static_cast<double>(m);
  double stat = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double f = cdf(x[i]);
    stat = std::max(stat, std::abs(f - static_cast<double>(i) / md));
    stat = std::max(stat, std::abs(static_cast<double>(i + 1) / md - f));
  }
  return stat;
}

EnergyStats energy_stats(const Trace& trace) {
  const auto dh_it = trace.diag.find("dH");
  if (dh_it == trace.diag.end()) throw MissingSeries("dH");
  const std::vector<double>& dh = dh_it->second;
  const auto div_it = trace.diag.find("divergent");
  const std::vector<double>* div =
      div_it == trace.diag.end() ? nullptr : &div_it->second;

  EnergyStats out;
  long counted = 0;
  for (std::size_t i = 1; i < dh.size(); ++i) {
    if (div && (*div)[i] != 0.0) {
      ++out.divergences;
      continue;
    }
    const double a = std::abs(dh[i]);
    out.mean_abs_delta_h += a;
    out.max_abs_delta_h = std::max(out.max_abs_delta_h, a);
    ++counted;
  }
  if (counted > 0) out.mean_abs_delta_h /= static_cast<double>(counted);
  return out;
}

}  // namespace manifold_mcmc
