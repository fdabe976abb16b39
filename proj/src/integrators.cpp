#include "manifold_mcmc/integrators.hpp"

#include <cmath>

namespace manifold_mcmc {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

void require_finite(const Eigen::VectorXd& v, const char* what) {
  if (!v.allFinite()) {
    throw NonFiniteState(std::string("non-finite ") + what);
  }
}

/// dH/dtheta split into its position-only part (-grad L + trace terms) and
/// the momentum-dependent quadratic part, so fixed-point loops at a frozen
/// theta pay the O(D^3) trace work once.
struct PositionGrad {
  Eigen::VectorXd fixed;
  const MetricTensor* metric = nullptr;
  const std::vector<Eigen::MatrixXd>* derivs = nullptr;

  explicit PositionGrad(const PhaseState& s)
      : fixed(-s.grad), metric(&s.metric), derivs(&s.metric_derivs) {
    if (!derivs->empty()) {
      const Eigen::MatrixXd ginv = spd_inverse(*metric);
      for (int i = 0; i < fixed.size(); ++i) {
        fixed[i] += 0.5 * (ginv * (*derivs)[i]).trace();
      }
    }
  }

  Eigen::VectorXd at(const Eigen::VectorXd& p) const {
    Eigen::VectorXd out = fixed;
    if (!derivs->empty()) {
      const Eigen::VectorXd gp = metric->solve(p);
      for (int i = 0; i < out.size(); ++i) {
        out[i] -= 0.5 * gp.dot((*derivs)[i] * gp);
      }
    }
    return out;
  }
};

}  // namespace

PhaseState make_phase_state(const TargetModel& model,
                            const Eigen::VectorXd& theta,
                            const Eigen::VectorXd& p, bool with_derivs) {
  model.check_dim(theta);
  PhaseState s{theta, p, model.log_density(theta),
               model.grad_log_density(theta), model.metric(theta), {}};
  if (with_derivs) s.metric_derivs = model.metric_derivs(theta);
  return s;
}

double hamiltonian_energy(const PhaseState& state) {
  const double d = static_cast<double>(state.theta.size());
  return -state.log_density + 0.5 * (d * kLog2Pi + state.metric.logdet()) +
         0.5 * state.metric.quad_inv(state.p);
}

double hamiltonian_energy(const TargetModel& model,
                          const Eigen::VectorXd& theta,
                          const Eigen::VectorXd& p) {
  return hamiltonian_energy(make_phase_state(model, theta, p));
}

Eigen::VectorXd hamiltonian_position_grad(const PhaseState& state) {
  return PositionGrad(state).at(state.p);
}

PhaseState leapfrog_step(const PhaseState& state, double step_size,
                         const TargetModel& model) {
  const double half = 0.5 * step_size;
  Eigen::VectorXd p_half = state.p + half * state.grad;
  Eigen::VectorXd theta_new =
      state.theta + step_size * state.metric.solve(p_half);
  require_finite(theta_new, "position");

  PhaseState next = make_phase_state(model, theta_new, p_half);
  next.p = p_half + half * next.grad;
  require_finite(next.p, "momentum");
  return next;
}

std::pair<PhaseState, IntegratorReport> generalized_leapfrog_step(
    const PhaseState& state, double step_size, const TargetModel& model,
    double fp_tol, int fp_max_iters) {
  if (state.metric_derivs.empty()) {
    throw McmcError("generalized_leapfrog_step: state built without derivs");
  }
  const double half = 0.5 * step_size;
  IntegratorReport report;
  report.steps_taken = 1;

  // Implicit momentum half-kick: p_half = p - (eps/2) dH/dtheta(theta, p_half).
  const PositionGrad grad_at_start(state);
  Eigen::VectorXd p_half = state.p;
  {
    int iters = 0;
    for (;;) {
      if (++iters > fp_max_iters) throw FixedPointDiverged(fp_max_iters);
      Eigen::VectorXd next = state.p - half * grad_at_start.at(p_half);
      require_finite(next, "momentum");
      const double incr = (next - p_half).lpNorm<Eigen::Infinity>();
      p_half = std::move(next);
      if (incr <= fp_tol) break;
    }
    report.max_fixed_point_iters = iters;
  }

  // Implicit drift:
  //   theta' = theta + (eps/2) (G(theta)^{-1} + G(theta')^{-1}) p_half.
  const Eigen::VectorXd drift_old = state.metric.solve(p_half);
  Eigen::VectorXd theta_new = state.theta;
  MetricTensor metric_new = state.metric;
  {
    int iters = 0;
    for (;;) {
      if (++iters > fp_max_iters) throw FixedPointDiverged(fp_max_iters);
      Eigen::VectorXd next =
          state.theta + half * (drift_old + metric_new.solve(p_half));
      require_finite(next, "position");
      const double incr = (next - theta_new).lpNorm<Eigen::Infinity>();
      theta_new = std::move(next);
      if (incr <= fp_tol) break;
      metric_new = model.metric(theta_new);
    }
    report.max_fixed_point_iters =
        std::max(report.max_fixed_point_iters, iters);
  }

  // Explicit final half-kick at the new position.
  PhaseState next =
      make_phase_state(model, theta_new, p_half, /*with_derivs=*/true);
  next.p = p_half - half * PositionGrad(next).at(p_half);
  require_finite(next.p, "momentum");
  report.converged = true;
  report.delta_h = hamiltonian_energy(next) - hamiltonian_energy(state);
  return {std::move(next), report};
}

}  // namespace manifold_mcmc
