#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "manifold_mcmc/geometry.hpp"

using namespace manifold_mcmc;

namespace {

Eigen::MatrixXd random_spd(int d, Rng& rng) {
  Eigen::MatrixXd a(d, d);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) a(i, j) = rng.normal();
  }
  return a * a.transpose() + 0.5 * d * Eigen::MatrixXd::Identity(d, d);
}

}  // namespace

TEST_CASE("cholesky of identity is identity") {
  const Eigen::MatrixXd m = Eigen::MatrixXd::Identity(2, 2);
  CHECK((cholesky(m) - m).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("cholesky of a diagonal matrix takes square roots") {
  Eigen::MatrixXd m(2, 2);
  m << 4, 0, 0, 9;
  Eigen::MatrixXd expected(2, 2);
  expected << 2, 0, 0, 3;
  CHECK((cholesky(m) - expected).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("cholesky hand-verifiable 2x2 case") {
  Eigen::MatrixXd m(2, 2);
  m << 4, 2, 2, 3;
  const Eigen::MatrixXd l = cholesky(m);
  CHECK(l(0, 0) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(l(0, 1) == 0.0);
  CHECK(l(1, 0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(l(1, 1) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
  // reconstruction oracle
  const Eigen::MatrixXd back = l * l.transpose();
  CHECK((back - m).cwiseAbs().maxCoeff() / m.cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("cholesky reports the first nonpositive pivot row") {
  Eigen::MatrixXd m(2, 2);
  m << 1, 0, 0, -1;
  CHECK_THROWS_AS(cholesky(m), NotPositiveDefinite);
  try {
    cholesky(m);
  } catch (const NotPositiveDefinite& e) {
    CHECK(e.pivot_row == 1);
  }

  Eigen::MatrixXd bad0(1, 1);
  bad0 << -3.0;
  try {
    cholesky(bad0);
    CHECK(false);
  } catch (const NotPositiveDefinite& e) {
    CHECK(e.pivot_row == 0);
  }

  // indefinite: pivot fails at the second row
  Eigen::MatrixXd indef(2, 2);
  indef << 1, 2, 2, 1;
  try {
    cholesky(indef);
    CHECK(false);
  } catch (const NotPositiveDefinite& e) {
    CHECK(e.pivot_row == 1);
  }
}

TEST_CASE("cholesky rejects empty and non-square input") {
  CHECK_THROWS_AS(cholesky(Eigen::MatrixXd(0, 0)), DimensionMismatch);
  CHECK_THROWS_AS(cholesky(Eigen::MatrixXd::Ones(2, 3)), DimensionMismatch);
}

TEST_CASE("metric tensor rejects asymmetric input") {
  Eigen::MatrixXd m(2, 2);
  m << 1, 0.5, 0.6, 1;
  CHECK_THROWS_AS(MetricTensor{m}, NotSymmetric);

  // tiny asymmetry is symmetrized away
  Eigen::MatrixXd drifted(2, 2);
  drifted << 1, 0.5, 0.5 + 1e-13, 1;
  const MetricTensor g{drifted};
  CHECK(g.matrix()(0, 1) == g.matrix()(1, 0));
}

TEST_CASE("spd_solve examples") {
  {
    const MetricTensor g{Eigen::MatrixXd::Identity(3, 3)};
    Eigen::VectorXd v(3);
    v << 1, 2, 3;
    CHECK((spd_solve(g, v) - v).cwiseAbs().maxCoeff() == 0.0);
  }
  {
    Eigen::MatrixXd m(2, 2);
    m << 2, 0, 0, 4;
    Eigen::VectorXd v(2);
    v << 2, 4;
    const Eigen::VectorXd x = spd_solve(MetricTensor{m}, v);
    CHECK(x[0] == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(x[1] == doctest::Approx(1.0).epsilon(1e-14));
  }
  {
    Eigen::MatrixXd m(2, 2);
    m << 4, 2, 2, 3;
    Eigen::VectorXd v(2);
    v << 6, 5;
    const Eigen::VectorXd x = spd_solve(MetricTensor{m}, v);
    CHECK(x[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(x[1] == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("spd_solve residual property on random SPD systems") {
  Rng rng(1234);
  for (int trial = 0; trial < 50; ++trial) {
    const int d = 1 + rng.uniform_int(8);
    const MetricTensor g{random_spd(d, rng)};
    Eigen::VectorXd v(d);
    for (int i = 0; i < d; ++i) v[i] = rng.normal();
    const Eigen::VectorXd x = g.solve(v);
    const double resid = (g.matrix() * x - v).norm() / std::max(v.norm(), 1e-30);
    CHECK(resid <= 1e-10);
  }
}

TEST_CASE("log_det examples") {
  CHECK(log_det(MetricTensor{Eigen::MatrixXd::Identity(5, 5)}) == 0.0);

  Eigen::MatrixXd diag(2, 2);
  diag << 2, 0, 0, 3;
  CHECK(log_det(MetricTensor{diag}) ==
        doctest::Approx(std::log(6.0)).epsilon(1e-12));

  Eigen::MatrixXd m(2, 2);
  m << 4, 2, 2, 3;
  CHECK(log_det(MetricTensor{m}) ==
        doctest::Approx(std::log(8.0)).epsilon(1e-12));
}

TEST_CASE("logdet of the inverse cancels") {
  Rng rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    const int d = 1 + rng.uniform_int(6);
    const MetricTensor g{random_spd(d, rng)};
    const MetricTensor ginv{spd_inverse(g)};
    CHECK(std::abs(g.logdet() + ginv.logdet()) <= 1e-9);
  }
}

TEST_CASE("sample_gaussian_cov: identity covariance returns the raw draws") {
  const MetricTensor g{Eigen::MatrixXd::Identity(3, 3)};
  Rng rng(77);
  const Eigen::VectorXd draw = sample_gaussian_cov(g, rng);
  Rng replay(77);
  for (int i = 0; i < 3; ++i) CHECK(draw[i] == replay.normal());
}

TEST_CASE("sample_gaussian_cov: 1-D variance 4 doubles the standard draw") {
  Eigen::MatrixXd m(1, 1);
  m << 4.0;
  const MetricTensor g{m};
  Rng rng(5);
  const Eigen::VectorXd draw = g.sample(rng);
  Rng replay(5);
  CHECK(draw[0] == 2.0 * replay.normal());
}

TEST_CASE("sample_gaussian_cov matches the target covariance empirically") {
  Eigen::MatrixXd m(2, 2);
  m << 4, 2, 2, 3;
  const MetricTensor g{m};
  Rng rng(2024);
  const int n = 100000;
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(2, 2);
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd x = g.sample(rng);
    acc += x * x.transpose();
  }
  acc /= n;
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      CHECK(std::abs(acc(i, j) - m(i, j)) / std::abs(m(i, j)) <= 0.05);
    }
  }
}

TEST_CASE("sampling is deterministic under a fixed seed") {
  Eigen::MatrixXd m(3, 3);
  m << 2, 0.3, 0.1, 0.3, 1.5, 0.2, 0.1, 0.2, 1.0;
  const MetricTensor g{m};
  Rng a(31415), b(31415);
  for (int i = 0; i < 10; ++i) {
    const Eigen::VectorXd x = g.sample(a);
    const Eigen::VectorXd y = g.sample(b);
    CHECK((x - y).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("quadratic form against the inverse is positive definite") {
  Rng rng(7);
  const MetricTensor g{random_spd(4, rng)};
  CHECK(g.quad_inv(Eigen::VectorXd::Zero(4)) == 0.0);
  for (int trial = 0; trial < 30; ++trial) {
    Eigen::VectorXd p(4);
    for (int i = 0; i < 4; ++i) p[i] = rng.normal();
    if (p.norm() == 0.0) continue;
    CHECK(g.quad_inv(p) > 0.0);
  }
}

TEST_CASE("lazy factorization failure surfaces at first use") {
  Eigen::MatrixXd m(2, 2);
  m << 1, 2, 2, 1;  // symmetric but indefinite
  const MetricTensor g{m};
  CHECK(g.matrix()(0, 1) == 2.0);  // construction succeeded
  CHECK_THROWS_AS(g.logdet(), NotPositiveDefinite);
  CHECK_THROWS_AS(g.chol(), NotPositiveDefinite);
}
