#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "manifold_mcmc/integrators.hpp"
#include "manifold_mcmc/targets.hpp"

using namespace manifold_mcmc;

namespace {

/// 1-D Gaussian with L(theta) = -theta^2/2 (no normalizer) and unit metric,
/// matching the convention the energy examples are written in.
TargetModel scalar_gaussian() {
  TargetModel m;
  m.name = "scalar_gaussian";
  m.dim = 1;
  m.constant_metric = true;
  m.log_density = [](const Eigen::VectorXd& t) { return -0.5 * t[0] * t[0]; };
  m.grad_log_density = [](const Eigen::VectorXd& t) {
    Eigen::VectorXd g(1);
    g[0] = -t[0];
    return g;
  };
  const MetricTensor unit{Eigen::MatrixXd::Identity(1, 1)};
  m.metric = [unit](const Eigen::VectorXd&) { return unit; };
  m.metric_derivs = [](const Eigen::VectorXd&) {
    return std::vector<Eigen::MatrixXd>(1, Eigen::MatrixXd::Zero(1, 1));
  };
  return m;
}

TargetModel flat_model(int d) {
  TargetModel m;
  m.name = "flat";
  m.dim = d;
  m.constant_metric = true;
  m.log_density = [](const Eigen::VectorXd&) { return 0.0; };
  m.grad_log_density = [d](const Eigen::VectorXd&) {
    return Eigen::VectorXd::Zero(d).eval();
  };
  const MetricTensor unit{Eigen::MatrixXd::Identity(d, d)};
  m.metric = [unit](const Eigen::VectorXd&) { return unit; };
  m.metric_derivs = [d](const Eigen::VectorXd&) {
    return std::vector<Eigen::MatrixXd>(d, Eigen::MatrixXd::Zero(d, d));
  };
  return m;
}

Eigen::VectorXd vec1(double x) {
  Eigen::VectorXd v(1);
  v << x;
  return v;
}

}  // namespace

TEST_CASE("energy of the 1-D standard Gaussian at the origin") {
  const TargetModel m = scalar_gaussian();
  const double h = hamiltonian_energy(m, vec1(0.0), vec1(0.0));
  CHECK(h == doctest::Approx(0.5 * std::log(2.0 * M_PI)).epsilon(1e-14));
  CHECK(h == doctest::Approx(0.918939).epsilon(1e-6));
}

TEST_CASE("doubling the momentum under the identity metric") {
  const TargetModel m = flat_model(3);
  Rng rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::VectorXd theta(3), p(3);
    for (int i = 0; i < 3; ++i) {
      theta[i] = rng.normal();
      p[i] = rng.normal();
    }
    const double gap = hamiltonian_energy(m, theta, 2.0 * p) -
                       hamiltonian_energy(m, theta, p);
    CHECK(std::abs(gap - 1.5 * p.squaredNorm()) <= 1e-12);
  }
}

TEST_CASE("constant metric: the logdet term cancels in energy differences") {
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(2);
  Eigen::MatrixXd cov(2, 2);
  cov << 2.0, 0.6, 0.6, 1.5;
  const TargetModel m = make_gaussian(mu, cov);
  Rng rng(8);
  Eigen::VectorXd t1(2), t2(2), p1(2), p2(2);
  for (int i = 0; i < 2; ++i) {
    t1[i] = rng.normal();
    t2[i] = rng.normal();
    p1[i] = rng.normal();
    p2[i] = rng.normal();
  }
  const double gap =
      hamiltonian_energy(m, t2, p2) - hamiltonian_energy(m, t1, p1);
  const MetricTensor g = m.metric(t1);
  const double expected = -(m.log_density(t2) - m.log_density(t1)) +
                          0.5 * (g.quad_inv(p2) - g.quad_inv(p1));
  CHECK(std::abs(gap - expected) <= 1e-12);
}

TEST_CASE("leapfrog on a flat target is pure drift") {
  const TargetModel m = flat_model(2);
  Eigen::VectorXd theta(2), p(2);
  theta << 0.3, -0.7;
  p << 1.0, 2.0;
  const PhaseState next =
      leapfrog_step(make_phase_state(m, theta, p), 0.25, m);
  CHECK((next.theta - (theta + 0.25 * p)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((next.p - p).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("leapfrog hand-checked step on the 1-D Gaussian") {
  const TargetModel m = scalar_gaussian();
  const PhaseState next =
      leapfrog_step(make_phase_state(m, vec1(1.0), vec1(0.0)), 0.1, m);
  CHECK(next.theta[0] == doctest::Approx(0.995).epsilon(1e-12));
  CHECK(next.p[0] == doctest::Approx(-0.09975).epsilon(1e-12));

  // independent scalar oracle
  double theta = 1.0, p = 0.0;
  const double eps = 0.1;
  const double p_half = p + 0.5 * eps * (-theta);
  const double theta_new = theta + eps * p_half;
  const double p_new = p_half + 0.5 * eps * (-theta_new);
  CHECK(next.theta[0] == doctest::Approx(theta_new).epsilon(1e-15));
  CHECK(next.p[0] == doctest::Approx(p_new).epsilon(1e-15));
}

TEST_CASE("single-step energy error scales as eps^3") {
  const TargetModel m = scalar_gaussian();
  const PhaseState start = make_phase_state(m, vec1(1.0), vec1(0.4));
  const double h0 = hamiltonian_energy(start);
  auto one_step_error = [&](double eps) {
    return std::abs(hamiltonian_energy(leapfrog_step(start, eps, m)) - h0);
  };
  const double ratio = one_step_error(0.2) / one_step_error(0.1);
  CHECK(ratio >= 6.0);
  CHECK(ratio <= 10.0);
}

TEST_CASE("explicit leapfrog reversibility on a constant-metric Gaussian") {
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(2);
  Eigen::MatrixXd cov(2, 2);
  cov << 1.0, 0.9, 0.9, 1.0;
  const TargetModel m = make_gaussian(mu, cov);
  Rng rng(12);
  Eigen::VectorXd theta(2), p(2);
  for (int i = 0; i < 2; ++i) {
    theta[i] = rng.normal();
    p[i] = rng.normal();
  }
  PhaseState s = make_phase_state(m, theta, p);
  const int steps = 25;
  for (int l = 0; l < steps; ++l) s = leapfrog_step(s, 0.1, m);
  s.p = -s.p;
  for (int l = 0; l < steps; ++l) s = leapfrog_step(s, 0.1, m);
  s.p = -s.p;
  CHECK((s.theta - theta).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK((s.p - p).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("explicit leapfrog preserves phase-space volume") {
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(2);
  const TargetModel m = make_gaussian(mu, Eigen::MatrixXd::Identity(2, 2));
  const double eps = 0.3;
  const double h = 1e-5;

  auto flow = [&](const Eigen::Vector4d& z) {
    Eigen::VectorXd theta = z.head<2>(), p = z.tail<2>();
    const PhaseState next = leapfrog_step(make_phase_state(m, theta, p), eps, m);
    Eigen::Vector4d out;
    out << next.theta, next.p;
    return out;
  };

  Eigen::Vector4d z0;
  z0 << 0.4, -0.2, 0.9, 0.1;
  Eigen::Matrix4d jac;
  for (int i = 0; i < 4; ++i) {
    Eigen::Vector4d zp = z0, zm = z0;
    zp[i] += h;
    zm[i] -= h;
    jac.col(i) = (flow(zp) - flow(zm)) / (2.0 * h);
  }
  CHECK(std::abs(jac.determinant() - 1.0) <= 1e-6);
}

TEST_CASE("generalized leapfrog reduces to the explicit scheme for constant metrics") {
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(2);
  Eigen::MatrixXd cov(2, 2);
  cov << 1.0, 0.9, 0.9, 1.0;
  const TargetModel m = make_gaussian(mu, cov);
  const double fp_tol = 1e-10;

  Rng rng(3);
  Eigen::VectorXd theta(2), p(2);
  for (int i = 0; i < 2; ++i) {
    theta[i] = rng.normal();
    p[i] = rng.normal();
  }
  PhaseState a = make_phase_state(m, theta, p);
  PhaseState b = make_phase_state(m, theta, p, /*with_derivs=*/true);
  for (int l = 0; l < 20; ++l) {
    a = leapfrog_step(a, 0.15, m);
    const double h_before = hamiltonian_energy(b);
    auto [next, report] = generalized_leapfrog_step(b, 0.15, m, fp_tol, 100);
    const double h_after = hamiltonian_energy(next);
    b = std::move(next);
    CHECK(report.converged);
    CHECK(report.steps_taken == 1);
    CHECK(report.max_fixed_point_iters <= 3);
    CHECK(report.delta_h == h_after - h_before);
    CHECK(std::isfinite(report.delta_h));
  }
  CHECK((a.theta - b.theta).cwiseAbs().maxCoeff() <= 10.0 * fp_tol);
  CHECK((a.p - b.p).cwiseAbs().maxCoeff() <= 10.0 * fp_tol);
}

TEST_CASE("generalized leapfrog round trip on the logistic target") {
  const TargetModel m = make_logistic(make_logistic_synthetic(5, 100, 7));
  Rng rng(21);
  Eigen::VectorXd theta(5), p(5);
  for (int i = 0; i < 5; ++i) theta[i] = 0.3 * rng.normal();
  const MetricTensor g = m.metric(theta);
  p = g.sample(rng);

  const double eps = 0.1, fp_tol = 1e-12;
  const int steps = 10;
  PhaseState s = make_phase_state(m, theta, p, true);
  for (int l = 0; l < steps; ++l) {
    s = generalized_leapfrog_step(s, eps, m, fp_tol, 200).first;
  }
  s.p = -s.p;
  for (int l = 0; l < steps; ++l) {
    s = generalized_leapfrog_step(s, eps, m, fp_tol, 200).first;
  }
  s.p = -s.p;
  CHECK((s.theta - theta).cwiseAbs().maxCoeff() <= 1e-6);
  CHECK((s.p - p).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("energy drift halves by ~4x when the step is halved") {
  const TargetModel m = make_logistic(make_logistic_synthetic(5, 100, 7));
  Rng rng(31);

  // fixed trajectory time: halving eps doubles the step count
  auto trajectory_error = [&](const Eigen::VectorXd& theta,
                              const Eigen::VectorXd& p, double eps,
                              int steps) {
    PhaseState s = make_phase_state(m, theta, p, true);
    const double h0 = hamiltonian_energy(s);
    for (int l = 0; l < steps; ++l) {
      s = generalized_leapfrog_step(s, eps, m, 1e-12, 200).first;
    }
    return std::abs(hamiltonian_energy(s) - h0);
  };

  double coarse = 0.0, fine = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::VectorXd theta(5);
    for (int i = 0; i < 5; ++i) theta[i] = 0.3 * rng.normal();
    const Eigen::VectorXd p = m.metric(theta).sample(rng);
    coarse += trajectory_error(theta, p, 0.12, 20);
    fine += trajectory_error(theta, p, 0.06, 40);
  }
  const double ratio = coarse / fine;
  CHECK(ratio >= 3.0);
  CHECK(ratio <= 5.0);
}

TEST_CASE("fixed-point budget exhaustion raises FixedPointDiverged") {
  const TargetModel m = make_logistic(make_logistic_synthetic(3, 50, 5));
  Rng rng(2);
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(3);
  const Eigen::VectorXd p = m.metric(theta).sample(rng);
  PhaseState s = make_phase_state(m, theta, p, true);
  CHECK_THROWS_AS(generalized_leapfrog_step(s, 0.5, m, 1e-14, 1),
                  FixedPointDiverged);
}

TEST_CASE("divergent trajectories raise NonFiniteState") {
  const TargetModel m = make_quartic();
  PhaseState s = make_phase_state(m, vec1(0.1), vec1(5.0));
  CHECK_THROWS_AS(
      [&] {
        for (int l = 0; l < 50; ++l) s = leapfrog_step(s, 10.0, m);
      }(),
      NonFiniteState);
}
