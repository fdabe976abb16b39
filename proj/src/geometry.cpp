#include "manifold_mcmc/geometry.hpp"

#include <cmath>

namespace manifold_mcmc {

Eigen::MatrixXd cholesky(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols() || m.rows() < 1) {
    throw DimensionMismatch("cholesky: matrix must be square with D >= 1");
  }
  const int n = static_cast<int>(m.rows());
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(n, n);
  for (int j = 0; j < n; ++j) {
    const double d = m(j, j) - L.row(j).head(j).squaredNorm();
    if (!(d > 0.0)) {  // also trips on nan
      throw NotPositiveDefinite(j);
    }
    L(j, j) = std::sqrt(d);
    for (int i = j + 1; i < n; ++i) {
      L(i, j) = (m(i, j) - L.row(i).head(j).dot(L.row(j).head(j))) / L(j, j);
    }
  }
  return L;
}

MetricTensor::MetricTensor(Eigen::MatrixXd m) {
  if (m.rows() != m.cols() || m.rows() < 1) {
    throw DimensionMismatch("MetricTensor: matrix must be square with D >= 1");
  }
  const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
  if (!(asym <= 1e-12)) {
    throw NotSymmetric(asym);
  }
  if (asym > 0.0) {
    m = 0.5 * (m + m.transpose()).eval();
  }
  state_ = std::make_shared<State>();
  state_->matrix = std::move(m);
}

const MetricTensor::State& MetricTensor::factored() const {
  std::call_once(state_->once, [this] {
    try {
      state_->chol = cholesky(state_->matrix);
      state_->logdet = 2.0 * state_->chol.diagonal().array().log().sum();
    } catch (const NotPositiveDefinite& e) {
      state_->bad_pivot_row = e.pivot_row;
    }
  });
  if (state_->bad_pivot_row >= 0) {
    throw NotPositiveDefinite(state_->bad_pivot_row);
  }
  return *state_;
}

const Eigen::MatrixXd& MetricTensor::chol() const { return factored().chol; }

double MetricTensor::logdet() const { return factored().logdet; }

Eigen::VectorXd MetricTensor::solve(const Eigen::VectorXd& v) const {
  const Eigen::MatrixXd& L = chol();
  if (v.size() != L.rows()) {
    throw DimensionMismatch("spd_solve: vector length does not match dim");
  }
  Eigen::VectorXd y = L.triangularView<Eigen::Lower>().solve(v);
  return L.transpose().triangularView<Eigen::Upper>().solve(y);
}

Eigen::VectorXd MetricTensor::solve_chol_transposed(
    const Eigen::VectorXd& v) const {
  const Eigen::MatrixXd& L = chol();
  return L.transpose().triangularView<Eigen::Upper>().solve(v);
}

double MetricTensor::quad_inv(const Eigen::VectorXd& p) const {
  const Eigen::MatrixXd& L = chol();
  Eigen::VectorXd y = L.triangularView<Eigen::Lower>().solve(p);
  return y.squaredNorm();
}

Eigen::VectorXd MetricTensor::sample(Rng& rng) const {
  const Eigen::MatrixXd& L = chol();
  Eigen::VectorXd z(dim());
  for (int i = 0; i < dim(); ++i) z[i] = rng.normal();
  return L.triangularView<Eigen::Lower>() * z;
}

Eigen::VectorXd spd_solve(const MetricTensor& m, const Eigen::VectorXd& v) {
  return m.solve(v);
}

double log_det(const MetricTensor& m) { return m.logdet(); }

Eigen::VectorXd sample_gaussian_cov(const MetricTensor& m, Rng& rng) {
  return m.sample(rng);
}

Eigen::MatrixXd spd_inverse(const MetricTensor& m) {
  const Eigen::MatrixXd& L = m.chol();
  const int n = m.dim();
  Eigen::MatrixXd Linv =
      L.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(n, n));
  Eigen::MatrixXd inv = Linv.transpose() * Linv;
  return 0.5 * (inv + inv.transpose());
}

}  // namespace manifold_mcmc
