#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "manifold_mcmc/geometry.hpp"
#include "manifold_mcmc/rng.hpp"

namespace manifold_mcmc {

/// One draw of an estimated metric tensor; derivatives ride along when the
/// estimator provides them. The estimator's density is never exposed.
struct SampledMetric {
  MetricTensor metric;
  std::optional<std::vector<Eigen::MatrixXd>> derivs;
};

/// Capability bundle for a target distribution. log_density and gradient are
/// always present; the geometric capabilities are optional and kernels check
/// for them before running. All callables are pure functions of (theta) or
/// (theta, rng) and safe to share across chains.
struct TargetModel {
  std::string name;
  int dim = 0;

  std::function<double(const Eigen::VectorXd&)> log_density;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> grad_log_density;

  std::function<MetricTensor(const Eigen::VectorXd&)> metric;
  std::function<std::vector<Eigen::MatrixXd>(const Eigen::VectorXd&)>
      metric_derivs;
  std::function<SampledMetric(const Eigen::VectorXd&, Rng&)> sample_metric;

  /// Whether metric(theta) is position-independent (explicit leapfrog is
  /// exact in that case).
  bool constant_metric = false;

  /// Whether sample_metric draws carry derivatives (set by the wrappers).
  bool sampled_metric_derivs = false;

  /// Reference CDF for 1-D targets (quartic only); used by KS diagnostics.
  std::function<double(double)> cdf_1d;

  bool has_metric() const { return static_cast<bool>(metric); }
  bool has_metric_derivs() const { return static_cast<bool>(metric_derivs); }
  bool has_sample_metric() const { return static_cast<bool>(sample_metric); }

  void check_dim(const Eigen::VectorXd& theta) const;
};

/// Multivariate Gaussian N(mean, cov) with constant Fisher metric cov^{-1}.
TargetModel make_gaussian(const Eigen::VectorXd& mean,
                          const Eigen::MatrixXd& cov);

/// 1-D target with log-density -x^4 (unnormalized), unit constant metric,
/// and a quadrature-backed CDF for diagnostics.
TargetModel make_quartic();

struct LogisticRegressionData {
  Eigen::MatrixXd X;       // n x D design
  Eigen::VectorXd y;       // n labels in {0,1}
  double prior_variance = 100.0;

  void validate() const;
};

/// Bayesian logistic regression with Gaussian prior N(0, alpha I); metric is
/// the expected Fisher information plus the prior precision.
TargetModel make_logistic(const LogisticRegressionData& data);

/// Self-contained synthetic dataset: seeded standard-normal design, true
/// coefficients drawn once from N(0, I), labels sampled from the model.
LogisticRegressionData make_logistic_synthetic(int dim, int n,
                                               std::uint64_t seed,
                                               double prior_variance = 100.0);

/// CSV loader: header row, columns x1..xD then y.
LogisticRegressionData load_logistic_csv(const std::string& path,
                                         double prior_variance = 100.0);

/// Wraps a model so that sample_metric draws Ghat ~ Wishart(nu, G(theta)/nu),
/// mean-correct and SPD for nu > D-1. When the inner model exposes metric
/// derivatives they are perturbed congruently with the same Wishart factor.
TargetModel wrap_noisy_metric(const TargetModel& inner, double wishart_dof);

/// Wraps a model so that sample_metric returns the exact metric (and exact
/// derivatives) without consuming randomness. Zero-noise limit of
/// wrap_noisy_metric; used to validate the extended-space kernels.
TargetModel wrap_exact_metric(const TargetModel& inner);

}  // namespace manifold_mcmc
