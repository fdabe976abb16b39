#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "manifold_mcmc/samplers.hpp"

namespace manifold_mcmc {

/// Effective sample size of a scalar series: N / (1 + 2 sum rho_t) with the
/// autocorrelation sum truncated at the first t where rho_t + rho_{t+1} <= 0.
/// Returns 0 for a degenerate (constant) series; clamped to [0, N].
double ess_series(const std::vector<double>& x);

/// ESS of one coordinate of a trace. Throws TraceTooShort below 100 states.
double ess(const Trace& trace, int coordinate);

struct Moments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
  Eigen::VectorXd mcse;  // per-coordinate: sd / sqrt(ESS)
};

/// Sample moments of the post-burn-in states. burn_in is the dropped fraction
/// in [0, 1); at least 100 states must remain.
Moments moments(const Trace& trace, double burn_in);

/// Sup-norm distance between the empirical CDF of the post-burn-in states and
/// a reference CDF. 1-D traces only.
double ks_statistic_1d(const Trace& trace,
                       const std::function<double(double)>& cdf,
                       double burn_in);

struct EnergyStats {
  double mean_abs_delta_h = 0.0;
  double max_abs_delta_h = 0.0;
  long divergences = 0;
};

/// Summary of the recorded dH series (Hamiltonian kernels only; throws
/// MissingSeries otherwise). Divergent proposals are counted separately and
/// excluded from the dH statistics.
EnergyStats energy_stats(const Trace& trace);

}  // namespace manifold_mcmc
