#pragma once

#include <Eigen/Dense>
#include <memory>
#include <mutex>

#include "manifold_mcmc/errors.hpp"
#include "manifold_mcmc/rng.hpp"

namespace manifold_mcmc {

/// Lower-triangular Cholesky factor of a symmetric matrix.
/// Throws NotPositiveDefinite with the row index of the first nonpositive
/// pivot.
Eigen::MatrixXd cholesky(const Eigen::MatrixXd& m);

/// Symmetric positive-definite D x D matrix with cached Cholesky factor and
/// log-determinant.
///
/// Construction symmetrizes the input as (M + M^T)/2 when the asymmetry is
/// within 1e-12 (guards against drift in finite-difference-built metrics) and
/// rejects it otherwise. The factor is computed on first use and cached;
/// instances are immutable and safe to share read-only across chains.
class MetricTensor {
 public:
  explicit MetricTensor(Eigen::MatrixXd m);

  int dim() const { return static_cast<int>(state_->matrix.rows()); }
  const Eigen::MatrixXd& matrix() const { return state_->matrix; }

  /// Lower-triangular factor L with L L^T = matrix().
  const Eigen::MatrixXd& chol() const;

  /// log |matrix()|, via 2 * sum(log diag(L)).
  double logdet() const;

  /// Solves matrix() * x = v.
  Eigen::VectorXd solve(const Eigen::VectorXd& v) const;

  /// Solves L^T x = v (used to draw from N(mu, s^2 * G^{-1})).
  Eigen::VectorXd solve_chol_transposed(const Eigen::VectorXd& v) const;

  /// p^T G^{-1} p, computed as ||L^{-1} p||^2 so it is nonnegative by
  /// construction.
  double quad_inv(const Eigen::VectorXd& p) const;

  /// One draw from N(0, matrix()), i.e. L z with z standard normal.
  Eigen::VectorXd sample(Rng& rng) const;

 private:
  struct State {
    Eigen::MatrixXd matrix;
    mutable std::once_flag once;
    mutable Eigen::MatrixXd chol;
    mutable double logdet = 0.0;
    mutable int bad_pivot_row = -1;  // >= 0 after a failed factorization
  };

  const State& factored() const;

  std::shared_ptr<State> state_;
};

/// Spec-surface free functions over MetricTensor.
Eigen::VectorXd spd_solve(const MetricTensor& m, const Eigen::VectorXd& v);
double log_det(const MetricTensor& m);
Eigen::VectorXd sample_gaussian_cov(const MetricTensor& m, Rng& rng);

/// Dense inverse of an SPD matrix through its Cholesky factor.
Eigen::MatrixXd spd_inverse(const MetricTensor& m);

}  // namespace manifold_mcmc
