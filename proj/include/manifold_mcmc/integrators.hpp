#pragma once

#include <Eigen/Dense>
#include <utility>
#include <vector>

#include "manifold_mcmc/geometry.hpp"
#include "manifold_mcmc/targets.hpp"

namespace manifold_mcmc {

/// Position/momentum pair with target-side quantities cached at theta. Build
/// through make_phase_state so the cache is consistent by construction.
struct PhaseState {
  Eigen::VectorXd theta;
  Eigen::VectorXd p;
  double log_density = 0.0;
  Eigen::VectorXd grad;
  MetricTensor metric;
  std::vector<Eigen::MatrixXd> metric_derivs;  // empty when not needed
};

PhaseState make_phase_state(const TargetModel& model,
                            const Eigen::VectorXd& theta,
                            const Eigen::VectorXd& p,
                            bool with_derivs = false);

struct IntegratorReport {
  int steps_taken = 0;
  double delta_h = 0.0;  // H(end) - H(start)
  int max_fixed_point_iters = 0;
  bool converged = true;
};

/// H(theta, p) = -L(theta) + (1/2) log((2 pi)^D |G(theta)|)
///             + (1/2) p^T G(theta)^{-1} p
double hamiltonian_energy(const PhaseState& state);
double hamiltonian_energy(const TargetModel& model,
                          const Eigen::VectorXd& theta,
                          const Eigen::VectorXd& p);

/// Gradient of H in theta: -grad L + (1/2) tr(G^{-1} dG_i)
/// - (1/2) p^T G^{-1} dG_i G^{-1} p per coordinate.
Eigen::VectorXd hamiltonian_position_grad(const PhaseState& state);

/// Explicit half-kick / drift / half-kick step. Valid only for
/// position-independent metrics. Throws NonFiniteState on divergence.
PhaseState leapfrog_step(const PhaseState& state, double step_size,
                         const TargetModel& model);

/// Implicit (fixed-point) generalized leapfrog for position-dependent
/// metrics: implicit momentum half-kick, implicit drift, explicit final
/// half-kick. Throws FixedPointDiverged when an implicit solve exceeds
/// fp_max_iters, NonFiniteState on divergence.
std::pair<PhaseState, IntegratorReport> generalized_leapfrog_step(
    const PhaseState& state, double step_size, const TargetModel& model,
    double fp_tol, int fp_max_iters);

}  // namespace manifold_mcmc
