#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "manifold_mcmc/quadrature.hpp"
#include "manifold_mcmc/rng.hpp"
#include "manifold_mcmc/targets.hpp"

namespace manifold_mcmc {

/// File-backed store for oracle results (JSON records, one per oracle,
/// written atomically). The directory comes from MANIFOLD_MCMC_ORACLE_CACHE
/// or the constructor argument. Each record carries a provenance note and the
/// fingerprint of its inputs; a fingerprint mismatch forces recomputation.
class OracleCache {
 public:
  explicit OracleCache(std::string dir = "");

  const std::string& dir() const { return dir_; }

  std::optional<std::string> load(const std::string& name,
                                  const std::string& fingerprint) const;
  void store(const std::string& name, const std::string& fingerprint,
             const std::string& provenance, const std::string& payload) const;

 private:
  std::string dir_;
};

/// Normalizer, moments and CDF table for a 1-D log-density (adaptive
/// composite Gauss-Legendre on [-8, 8]). `cache_key` enables caching; pass an
/// empty key for a one-off computation.
DensitySummary quadrature_moments(
    const std::function<double(double)>& log_density, int order = 64,
    const std::string& cache_key = "", const OracleCache* cache = nullptr);

/// Max relative error between an analytic gradient and centered finite
/// differences over the given points. The error is scaled by the sup-norm of
/// the analytic gradient at each point (floored at 1).
double finite_difference_check(
    const std::function<double(const Eigen::VectorXd&)>& f,
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& grad_f,
    const std::vector<Eigen::VectorXd>& points, double h = 1e-5);

/// Entrywise absolute error between analytic metric derivatives and centered
/// finite differences of the metric.
double metric_derivs_fd_check(const TargetModel& model,
                              const std::vector<Eigen::VectorXd>& points,
                              double h = 1e-5);

/// Exact draws from the normalized quartic density exp(-x^4)/Z by rejection
/// from a N(0, 0.75^2) envelope.
struct RejectionSample {
  std::vector<double> draws;
  double acceptance_rate = 0.0;
  double predicted_acceptance_rate = 0.0;
};
RejectionSample rejection_sampler_quartic(long n, Rng& rng);

/// Long random-walk reference run: cached posterior mean / covariance / MCSE
/// for stationarity tests against other kernels.
struct ReferenceMoments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
  Eigen::VectorXd mcse;
  long n_steps = 0;
};
ReferenceMoments reference_run(const TargetModel& model,
                               const Eigen::VectorXd& initial,
                               double rwm_step_size, long n_steps,
                               std::uint64_t seed,
                               const std::string& cache_key,
                               const OracleCache* cache = nullptr);

}  // namespace manifold_mcmc
