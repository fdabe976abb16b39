#include "manifold_mcmc/samplers.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>

#include "manifold_mcmc/integrators.hpp"

namespace manifold_mcmc {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

Eigen::VectorXd std_normal_vec(int d, Rng& rng) {
  Eigen::VectorXd z(d);
  for (int i = 0; i < d; ++i) z[i] = rng.normal();
  return z;
}

/// log N(resid; 0, scale^2 I)
double log_q_iso(const Eigen::VectorXd& resid, double scale, int d) {
  return -0.5 * resid.squaredNorm() / (scale * scale) - d * std::log(scale) -
         0.5 * d * kLog2Pi;
}

/// log N(resid; 0, eps^2 G^{-1})
double log_q_precond(const Eigen::VectorXd& resid, const MetricTensor& g,
                     double eps, int d) {
  const double quad = resid.dot(g.matrix() * resid);
  return -0.5 * quad / (eps * eps) - d * std::log(eps) + 0.5 * g.logdet() -
         0.5 * d * kLog2Pi;
}

bool mh_accept(double log_ratio, Rng& rng) {
  return std::log(rng.uniform()) < log_ratio;
}

StepOutcome rejected(const ChainState& state, double log_ratio,
                     bool divergent) {
  StepOutcome out;
  out.state = state;
  out.accepted = false;
  out.log_accept_ratio = log_ratio;
  out.divergent = divergent;
  return out;
}

bool finite_scalar(double x) { return std::isfinite(x); }

/// Riemannian-Langevin curvature drift:
///   omega_i = -sum_j [G^{-1} dG_j G^{-1}]_{ij}
///           + (1/2) sum_j (G^{-1})_{ij} tr(G^{-1} dG_j)
Eigen::VectorXd curvature_drift(const MetricTensor& g,
                                const std::vector<Eigen::MatrixXd>& dg) {
  const int d = g.dim();
  const Eigen::MatrixXd ginv = spd_inverse(g);
  Eigen::VectorXd omega = Eigen::VectorXd::Zero(d);
  for (int j = 0; j < d; ++j) {
    const Eigen::MatrixXd m = ginv * dg[j] * ginv;
    omega -= m.col(j);
    omega += (0.5 * (ginv * dg[j]).trace()) * ginv.col(j);
  }
  return omega;
}

}  // namespace

KernelId kernel_from_name(const std::string& name) {
  if (name == "rwm") return KernelId::Rwm;
  if (name == "mala") return KernelId::Mala;
  if (name == "decoupled_langevin") return KernelId::DecoupledLangevin;
  if (name == "simplified_mmala") return KernelId::SimplifiedMmala;
  if (name == "full_mmala") return KernelId::FullMmala;
  if (name == "hmc") return KernelId::Hmc;
  if (name == "rmhmc") return KernelId::Rmhmc;
  if (name == "multipotential_rmhmc") return KernelId::MultipotentialRmhmc;
  if (name == "extended_noisy_cc") return KernelId::ExtendedNoisyCc;
  if (name == "extended_noisy_mmala") return KernelId::ExtendedNoisyMmala;
  if (name == "qn_precond_mala") return KernelId::QnPrecondMala;
  throw ValidationError("kernel", "unknown kernel '" + name + "'");
}

std::string kernel_name(KernelId id) {
  switch (id) {
    case KernelId::Rwm: return "rwm";
    case KernelId::Mala: return "mala";
    case KernelId::DecoupledLangevin: return "decoupled_langevin";
    case KernelId::SimplifiedMmala: return "simplified_mmala";
    case KernelId::FullMmala: return "full_mmala";
    case KernelId::Hmc: return "hmc";
    case KernelId::Rmhmc: return "rmhmc";
    case KernelId::MultipotentialRmhmc: return "multipotential_rmhmc";
    case KernelId::ExtendedNoisyCc: return "extended_noisy_cc";
    case KernelId::ExtendedNoisyMmala: return "extended_noisy_mmala";
    case KernelId::QnPrecondMala: return "qn_precond_mala";
  }
  return "?";
}

void SamplerConfig::validate() const {
  if (!(step_size > 0.0)) throw ValidationError("step_size", "must be > 0");
  if (!(eta >= 0.0)) throw ValidationError("eta", "must be >= 0");
  if (!(tau > 0.0)) throw ValidationError("tau", "must be > 0");
  if (n_leapfrog < 1) throw ValidationError("n_leapfrog", "must be >= 1");
  if (n_metrics < 1) throw ValidationError("n_metrics", "must be >= 1");
  if (adapt_window < 0) throw ValidationError("adapt_window", "must be >= 0");
  if (memory < 1) throw ValidationError("memory", "must be >= 1");
  if (!(gamma_min > 0.0)) throw ValidationError("gamma_min", "must be > 0");
  if (!(fp_tol > 0.0)) throw ValidationError("fp_tol", "must be > 0");
  if (fp_max_iters < 1) throw ValidationError("fp_max_iters", "must be >= 1");
}

MetricField model_metric_field(const TargetModel& model) {
  MetricField f;
  f.metric = model.metric;
  f.derivs = model.metric_derivs;
  f.constant = model.constant_metric;
  return f;
}

MetricField identity_metric_field(int dim) {
  MetricField f;
  const MetricTensor eye{Eigen::MatrixXd::Identity(dim, dim)};
  f.metric = [eye](const Eigen::VectorXd&) { return eye; };
  f.derivs = [dim](const Eigen::VectorXd&) {
    return std::vector<Eigen::MatrixXd>(dim, Eigen::MatrixXd::Zero(dim, dim));
  };
  f.constant = true;
  return f;
}

// --- quasi-Newton adapter ----------------------------------------------------

QnAdapter::QnAdapter(int dim, int window, int memory, double gamma_min)
    : dim_(dim), window_(window), memory_(memory), gamma_min_(gamma_min) {
  if (window_ == 0) freeze();
}

void QnAdapter::observe(const Eigen::VectorXd& theta_old,
                        const Eigen::VectorXd& grad_old,
                        const Eigen::VectorXd& theta_new,
                        const Eigen::VectorXd& grad_new) {
  if (frozen_) return;
  ++observations_;
  Eigen::VectorXd s = theta_new - theta_old;
  Eigen::VectorXd y = grad_old - grad_new;  // -(delta grad L)
  const double sy = s.dot(y);
  if (sy > 0.0) {  // skip pairs without positive curvature
    pairs_.push_back({std::move(s), std::move(y)});
    if (static_cast<int>(pairs_.size()) > memory_) pairs_.pop_front();
  }
  if (observations_ >= window_) freeze();
}

Eigen::VectorXd QnAdapter::apply_inverse(const Eigen::VectorXd& v) const {
  // Two-loop recursion for H = B^{-1} over the stored pairs, base scaling
  // from the most recent pair's Barzilai-Borwein scalar floored at gamma_min.
  const int n = static_cast<int>(pairs_.size());
  std::vector<double> rho(n), alpha(n);
  for (int i = 0; i < n; ++i) rho[i] = 1.0 / pairs_[i].y.dot(pairs_[i].s);

  Eigen::VectorXd q = v;
  for (int i = n - 1; i >= 0; --i) {
    alpha[i] = rho[i] * pairs_[i].s.dot(q);
    q -= alpha[i] * pairs_[i].y;
  }
  const Pair& last = pairs_.back();
  const double gamma =
      std::max(last.s.dot(last.y) / last.y.dot(last.y), gamma_min_);
  Eigen::VectorXd r = gamma * q;
  for (int i = 0; i < n; ++i) {
    const double beta = rho[i] * pairs_[i].y.dot(r);
    r += (alpha[i] - beta) * pairs_[i].s;
  }
  return r;
}

Eigen::MatrixXd QnAdapter::curvature() const {
  if (pairs_.empty()) {
    // Degenerate: no usable curvature pairs; fall back to the floor scaling.
    return gamma_min_ * Eigen::MatrixXd::Identity(dim_, dim_);
  }
  Eigen::MatrixXd h(dim_, dim_);
  for (int i = 0; i < dim_; ++i) {
    h.col(i) = apply_inverse(Eigen::VectorXd::Unit(dim_, i));
  }
  h = 0.5 * (h + h.transpose()).eval();
  return spd_inverse(MetricTensor(h));
}

void QnAdapter::freeze() {
  if (frozen_) return;
  frozen_ = true;
  frozen_metric_ = MetricTensor(curvature());

  const Eigen::MatrixXd& b = frozen_metric_->matrix();
  std::uint64_t hash = 1469598103934665603ULL;  // FNV-1a over the B bytes
  for (int j = 0; j < b.cols(); ++j) {
    for (int i = 0; i < b.rows(); ++i) {
      std::uint64_t bits;
      const double v = b(i, j);
      std::memcpy(&bits, &v, sizeof bits);
      for (int k = 0; k < 8; ++k) {
        hash ^= (bits >> (8 * k)) & 0xFFULL;
        hash *= 1099511628211ULL;
      }
    }
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(hash));
  fingerprint_ = buf;
}

const MetricTensor& QnAdapter::metric() const {
  if (!frozen_metric_) throw McmcError("QnAdapter: metric requested before freeze");
  return *frozen_metric_;
}

std::string QnAdapter::fingerprint() const { return fingerprint_; }

// --- kernels -----------------------------------------------------------------

StepOutcome rwm_step(const ChainState& state, const SamplerConfig& cfg,
                     const TargetModel& model, Rng& rng) {
  const int d = static_cast<int>(state.theta.size());
  const Eigen::VectorXd z = std_normal_vec(d, rng);
  const Eigen::VectorXd theta_star = state.theta + cfg.step_size * z;

  const double ld_star = model.log_density(theta_star);
  const double log_a = ld_star - state.log_density;
  StepOutcome out;
  out.log_accept_ratio = log_a;
  if (mh_accept(log_a, rng)) {
    out.accepted = true;
    out.state.theta = theta_star;
    out.state.log_density = ld_star;
  } else {
    out.state = state;
  }
  return out;
}

StepOutcome mala_step(const ChainState& state, const SamplerConfig& cfg,
                      const TargetModel& model, Rng& rng) {
  const int d = static_cast<int>(state.theta.size());
  const double eps = cfg.step_size;
  const double drift = 0.5 * eps * eps;
  const Eigen::VectorXd& g = *state.grad;

  const Eigen::VectorXd z = std_normal_vec(d, rng);
  const Eigen::VectorXd mean_fwd = state.theta + drift * g;
  const Eigen::VectorXd theta_star = mean_fwd + eps * z;
  if (!theta_star.allFinite()) return rejected(state, -INFINITY, true);

  const double ld_star = model.log_density(theta_star);
  const Eigen::VectorXd g_star = model.grad_log_density(theta_star);
  if (!finite_scalar(ld_star) || !g_star.allFinite()) {
    return rejected(state, -INFINITY, true);
  }

  const Eigen::VectorXd mean_rev = theta_star + drift * g_star;
  const double log_q_fwd = log_q_iso(theta_star - mean_fwd, eps, d);
  const double log_q_rev = log_q_iso(state.theta - mean_rev, eps, d);
  const double log_a = (ld_star - state.log_density) + (log_q_rev - log_q_fwd);

  StepOutcome out;
  out.log_accept_ratio = log_a;
  if (mh_accept(log_a, rng)) {
    out.accepted = true;
    out.state.theta = theta_star;
    out.state.log_density = ld_star;
    out.state.grad = g_star;
  } else {
    out.state = state;
  }
  return out;
}

StepOutcome decoupled_langevin_step(const ChainState& state,
                                    const SamplerConfig& cfg,
                                    const TargetModel& model, Rng& rng) {
  const int d = static_cast<int>(state.theta.size());
  const Eigen::VectorXd& g = *state.grad;

  const Eigen::VectorXd z = std_normal_vec(d, rng);
  const Eigen::VectorXd mean_fwd = state.theta + cfg.eta * g;
  const Eigen::VectorXd theta_star = mean_fwd + cfg.tau * z;

  if (!cfg.adjust) {
    // Unadjusted discretisation: every proposal is taken; a non-finite state
    // cannot be recovered from and aborts the chain.
    if (!theta_star.allFinite()) {
      throw NonFiniteState("unadjusted Langevin produced non-finite position");
    }
    const double ld_star = model.log_density(theta_star);
    const Eigen::VectorXd g_star = model.grad_log_density(theta_star);
    if (!finite_scalar(ld_star) || !g_star.allFinite()) {
      throw NonFiniteState("unadjusted Langevin left the finite-density region");
    }
    StepOutcome out;
    out.accepted = true;
    out.log_accept_ratio = 0.0;
    out.state.theta = theta_star;
    out.state.log_density = ld_star;
    out.state.grad = g_star;
    return out;
  }

  if (!theta_star.allFinite()) return rejected(state, -INFINITY, true);
  const double ld_star = model.log_density(theta_star);
  const Eigen::VectorXd g_star = model.grad_log_density(theta_star);
  if (!finite_scalar(ld_star) || !g_star.allFinite()) {
    return rejected(state, -INFINITY, true);
  }

  const Eigen::VectorXd mean_rev = theta_star + cfg.eta * g_star;
  const double log_q_fwd = log_q_iso(theta_star - mean_fwd, cfg.tau, d);
  const double log_q_rev = log_q_iso(state.theta - mean_rev, cfg.tau, d);
  const double log_a = (ld_star - state.log_density) + (log_q_rev - log_q_fwd);

  StepOutcome out;
  out.log_accept_ratio = log_a;
  if (mh_accept(log_a, rng)) {
    out.accepted = true;
    out.state.theta = theta_star;
    out.state.log_density = ld_star;
    out.state.grad = g_star;
  } else {
    out.state = state;
  }
  return out;
}

namespace {

/// Shared body for the position-dependent preconditioned Langevin proposals.
/// `with_curvature` adds the metric-derivative drift term (full MMALA).
struct PrecondProposal {
  Eigen::VectorXd mean;
  Eigen::VectorXd theta_star;
};

PrecondProposal precond_propose(const Eigen::VectorXd& theta,
                                const Eigen::VectorXd& grad,
                                const MetricTensor& g, double eps,
                                const Eigen::VectorXd& z) {
  const double drift = 0.5 * eps * eps;
  PrecondProposal out;
  out.mean = theta + drift * g.solve(grad);
  out.theta_star = out.mean + eps * g.solve_chol_transposed(z);
  return out;
}

Eigen::VectorXd precond_mean_full(const Eigen::VectorXd& theta,
                                  const Eigen::VectorXd& grad,
                                  const MetricTensor& g,
                                  const std::vector<Eigen::MatrixXd>& dg,
                                  double eps) {
  const double drift = 0.5 * eps * eps;
  return theta + drift * g.solve(grad) + (eps * eps) * curvature_drift(g, dg);
}

}  // namespace

StepOutcome simplified_mmala_step(const ChainState& state,
                                  const SamplerConfig& cfg,
                                  const TargetModel& model, Rng& rng) {
  const int d = static_cast<int>(state.theta.size());
  const double eps = cfg.step_size;
  const MetricTensor& g = *state.metric;

  const Eigen::VectorXd z = std_normal_vec(d, rng);
  const PrecondProposal prop =
      precond_propose(state.theta, *state.grad, g, eps, z);
  if (!prop.theta_star.allFinite()) return rejected(state, -INFINITY, true);

  const double ld_star = model.log_density(prop.theta_star);
  const Eigen::VectorXd g_star = model.grad_log_density(prop.theta_star);
  if (!finite_scalar(ld_star) || !g_star.allFinite()) {
    return rejected(state, -INFINITY, true);
  }

  try {
    const MetricTensor metric_star = model.metric(prop.theta_star);
    const double drift = 0.5 * eps * eps;
    const Eigen::VectorXd mean_rev =
        prop.theta_star + drift * metric_star.solve(g_star);
    const double log_q_fwd =
        log_q_precond(prop.theta_star - prop.mean, g, eps, d);
    const double log_q_rev =
        log_q_precond(state.theta - mean_rev, metric_star, eps, d);
    const double log_a =
        (ld_star - state.log_density) + (log_q_rev - log_q_fwd);

    StepOutcome out;
    out.log_accept_ratio = log_a;
    if (mh_accept(log_a, rng)) {
      out.accepted = true;
      out.state.theta = prop.theta_star;
      out.state.log_density = ld_star;
      out.state.grad = g_star;
      out.state.metric = metric_star;
    } else {
      out.state = state;
    }
    return out;
  } catch (const NotPositiveDefinite&) {
    return rejected(state, -INFINITY, true);
  }
}

StepOutcome full_mmala_step(const ChainState& state, const SamplerConfig& cfg,
                            const TargetModel& model, Rng& rng) {
  const int d = static_cast<int>(state.theta.size());
  const double eps = cfg.step_size;
  const MetricTensor& g = *state.metric;
  const std::vector<Eigen::MatrixXd>& dg = *state.metric_derivs;

  const Eigen::VectorXd z = std_normal_vec(d, rng);
  const Eigen::VectorXd mean_fwd =
      precond_mean_full(state.theta, *state.grad, g, dg, eps);
  const Eigen::VectorXd theta_star = mean_fwd + eps * g.solve_chol_transposed(z);
  if (!theta_star.allFinite()) return rejected(state, -INFINITY, true);

  const double ld_star = model.log_density(theta_star);
  const Eigen::VectorXd g_star = model.grad_log_density(theta_star);
  if (!finite_scalar(ld_star) || !g_star.allFinite()) {
    return rejected(state, -INFINITY, true);
  }

  try {
    const MetricTensor metric_star = model.metric(theta_star);
    const std::vector<Eigen::MatrixXd> dg_star =
        model.metric_derivs(theta_star);
    const Eigen::VectorXd mean_rev =
        precond_mean_full(theta_star, g_star, metric_star, dg_star, eps);
    const double log_q_fwd = log_q_precond(theta_star - mean_fwd, g, eps, d);
    const double log_q_rev =
        log_q_precond(state.theta - mean_rev, metric_star, eps, d);
    const double log_a =
        (ld_star - state.log_density) + (log_q_rev - log_q_fwd);

    StepOutcome out;
    out.log_accept_ratio = log_a;
    if (mh_accept(log_a, rng)) {
      out.accepted = true;
      out.state.theta = theta_star;
      out.state.log_density = ld_star;
      out.state.grad = g_star;
      out.state.metric = metric_star;
      out.state.metric_derivs = dg_star;
    } else {
      out.state = state;
    }
    return out;
  } catch (const NotPositiveDefinite&) {
    return rejected(state, -INFINITY, true);
  }
}

namespace {

/// Common Hamiltonian acceptance wrapper: runs `trajectory`, which returns
/// the end PhaseState, and accepts with 1 ^ exp(-dH).
template <typename Trajectory>
StepOutcome hamiltonian_accept(const ChainState& state,
                               const MetricTensor& refresh_metric,
                               const std::vector<Eigen::MatrixXd>* derivs,
                               Rng& rng, Trajectory&& trajectory) {
  const Eigen::VectorXd p = refresh_metric.sample(rng);
  PhaseState ps{state.theta,
                p,
                state.log_density,
                *state.grad,
                refresh_metric,
                derivs ? *derivs : std::vector<Eigen::MatrixXd>{}};
  const double h0 = hamiltonian_energy(ps);

  StepOutcome out;
  int fp_iters = 0;
  try {
    ps = trajectory(std::move(ps), fp_iters);
  } catch (const NonFiniteState&) {
    out = rejected(state, -INFINITY, true);
    out.delta_h = INFINITY;
    out.fp_iters = fp_iters;
    return out;
  } catch (const FixedPointDiverged&) {
    out = rejected(state, -INFINITY, true);
    out.delta_h = INFINITY;
    out.fp_iters = fp_iters;
    return out;
  } catch (const NotPositiveDefinite&) {
    out = rejected(state, -INFINITY, true);
    out.delta_h = INFINITY;
    out.fp_iters = fp_iters;
    return out;
  }

  const double h1 = hamiltonian_energy(ps);
  const double log_a = h0 - h1;
  out.log_accept_ratio = log_a;
  out.delta_h = h1 - h0;
  out.fp_iters = fp_iters;
  if (mh_accept(log_a, rng)) {
    out.accepted = true;
    out.state.theta = std::move(ps.theta);
    out.state.log_density = ps.log_density;
    out.state.grad = std::move(ps.grad);
    out.state.metric = std::move(ps.metric);
    if (!ps.metric_derivs.empty()) {
      out.state.metric_derivs = std::move(ps.metric_derivs);
    }
  } else {
    out.state = state;
  }
  return out;
}

}  // namespace

StepOutcome hmc_step(const ChainState& state, const SamplerConfig& cfg,
                     const TargetModel& model, Rng& rng) {
  return hamiltonian_accept(
      state, *state.metric, nullptr, rng,
      [&](PhaseState ps, int&) {
        for (int l = 0; l < cfg.n_leapfrog; ++l) {
          ps = leapfrog_step(ps, cfg.step_size, model);
        }
        return ps;
      });
}

StepOutcome rmhmc_step(const ChainState& state, const SamplerConfig& cfg,
                       const TargetModel& model, Rng& rng) {
  return hamiltonian_accept(
      state, *state.metric, &*state.metric_derivs, rng,
      [&](PhaseState ps, int& fp_iters) {
        for (int l = 0; l < cfg.n_leapfrog; ++l) {
          auto [next, report] = generalized_leapfrog_step(
              ps, cfg.step_size, model, cfg.fp_tol, cfg.fp_max_iters);
          ps = std::move(next);
          fp_iters = std::max(fp_iters, report.max_fixed_point_iters);
        }
        return ps;
      });
}

StepOutcome multipotential_rmhmc_step(const ChainState& state,
                                      const SamplerConfig& cfg,
                                      const TargetModel& model,
                                      const std::vector<MetricField>& metrics,
                                      Rng& rng) {
  if (static_cast<int>(metrics.size()) != cfg.n_metrics) {
    throw ValidationError("n_metrics",
                          "metric list size does not match n_metrics");
  }
  // One momentum block is active per step; the inactive blocks are
  // conditionally Gaussian given theta and are marginalized out, so the
  // (theta, p_j) dynamics coincide with single-metric RMHMC under G_j.
  const int j = cfg.n_metrics == 1 ? 0 : rng.uniform_int(cfg.n_metrics);
  const MetricField& field = metrics[j];

  TargetModel view = model;
  view.metric = field.metric;
  view.metric_derivs = field.derivs;
  view.constant_metric = field.constant;

  const MetricTensor g = field.metric(state.theta);
  const std::vector<Eigen::MatrixXd> dg = field.derivs(state.theta);

  StepOutcome out = hamiltonian_accept(
      state, g, &dg, rng, [&](PhaseState ps, int& fp_iters) {
        for (int l = 0; l < cfg.n_leapfrog; ++l) {
          auto [next, report] = generalized_leapfrog_step(
              ps, cfg.step_size, view, cfg.fp_tol, cfg.fp_max_iters);
          ps = std::move(next);
          fp_iters = std::max(fp_iters, report.max_fixed_point_iters);
        }
        return ps;
      });
  // The cached metric belongs to field j, not the model; drop it so the next
  // step recomputes under its own drawn index.
  out.state.metric.reset();
  out.state.metric_derivs.reset();
  out.chosen_index = j;
  return out;
}

StepOutcome extended_noisy_cc_step(const ChainState& state,
                                   const SamplerConfig& cfg,
                                   const TargetModel& model, Rng& rng) {
  const int d = static_cast<int>(state.theta.size());
  const double eps = cfg.step_size;
  const SampledMetric& aux = *state.aux;

  const Eigen::VectorXd z = std_normal_vec(d, rng);
  try {
    const PrecondProposal prop =
        precond_propose(state.theta, *state.grad, aux.metric, eps, z);
    if (!prop.theta_star.allFinite()) return rejected(state, -INFINITY, true);

    const double ld_star = model.log_density(prop.theta_star);
    const Eigen::VectorXd g_star = model.grad_log_density(prop.theta_star);
    if (!finite_scalar(ld_star) || !g_star.allFinite()) {
      return rejected(state, -INFINITY, true);
    }

    // Fresh auxiliary draw at the proposed point; its density never appears
    // in the ratio. A failed factorization is a rejection, never a redraw.
    SampledMetric aux_star = model.sample_metric(prop.theta_star, rng);
    const double drift = 0.5 * eps * eps;
    const Eigen::VectorXd mean_rev =
        prop.theta_star + drift * aux_star.metric.solve(g_star);
    const double log_q_fwd =
        log_q_precond(prop.theta_star - prop.mean, aux.metric, eps, d);
    const double log_q_rev =
        log_q_precond(state.theta - mean_rev, aux_star.metric, eps, d);
    const double log_a =
        (ld_star - state.log_density) + (log_q_rev - log_q_fwd);

    StepOutcome out;
    out.log_accept_ratio = log_a;
    if (mh_accept(log_a, rng)) {
      out.accepted = true;
      out.state.theta = prop.theta_star;
      out.state.log_density = ld_star;
      out.state.grad = g_star;
      out.state.aux = std::move(aux_star);
    } else {
      out.state = state;  // keeps (theta, Ghat) unchanged
    }
    return out;
  } catch (const NotPositiveDefinite&) {
    return rejected(state, -INFINITY, true);
  }
}

StepOutcome extended_noisy_mmala_step(const ChainState& state,
                                      const SamplerConfig& cfg,
                                      const TargetModel& model, Rng& rng) {
  const int d = static_cast<int>(state.theta.size());
  const double eps = cfg.step_size;
  const SampledMetric& aux = *state.aux;

  const Eigen::VectorXd z = std_normal_vec(d, rng);
  try {
    const Eigen::VectorXd mean_fwd = precond_mean_full(
        state.theta, *state.grad, aux.metric, aux.derivs.value(), eps);
    const Eigen::VectorXd theta_star =
        mean_fwd + eps * aux.metric.solve_chol_transposed(z);
    if (!theta_star.allFinite()) return rejected(state, -INFINITY, true);

    const double ld_star = model.log_density(theta_star);
    const Eigen::VectorXd g_star = model.grad_log_density(theta_star);
    if (!finite_scalar(ld_star) || !g_star.allFinite()) {
      return rejected(state, -INFINITY, true);
    }

    SampledMetric aux_star = model.sample_metric(theta_star, rng);
    const Eigen::VectorXd mean_rev = precond_mean_full(
        theta_star, g_star, aux_star.metric, aux_star.derivs.value(), eps);
    const double log_q_fwd =
        log_q_precond(theta_star - mean_fwd, aux.metric, eps, d);
    const double log_q_rev =
        log_q_precond(state.theta - mean_rev, aux_star.metric, eps, d);
    const double log_a =
        (ld_star - state.log_density) + (log_q_rev - log_q_fwd);

    StepOutcome out;
    out.log_accept_ratio = log_a;
    if (mh_accept(log_a, rng)) {
      out.accepted = true;
      out.state.theta = theta_star;
      out.state.log_density = ld_star;
      out.state.grad = g_star;
      out.state.aux = std::move(aux_star);
    } else {
      out.state = state;
    }
    return out;
  } catch (const NotPositiveDefinite&) {
    return rejected(state, -INFINITY, true);
  }
}

StepOutcome qn_precond_mala_step(const ChainState& state,
                                 const SamplerConfig& cfg,
                                 const TargetModel& model, Rng& rng,
                                 QnAdapter& adapter) {
  if (!adapter.frozen()) {
    // Warmup: plain MALA while the adapter collects curvature pairs.
    StepOutcome out = mala_step(state, cfg, model, rng);
    adapter.observe(state.theta, *state.grad, out.state.theta,
                    *out.state.grad);
    return out;
  }

  const int d = static_cast<int>(state.theta.size());
  const double eps = cfg.step_size;
  const MetricTensor& b = adapter.metric();

  const Eigen::VectorXd z = std_normal_vec(d, rng);
  const PrecondProposal prop =
      precond_propose(state.theta, *state.grad, b, eps, z);
  if (!prop.theta_star.allFinite()) return rejected(state, -INFINITY, true);

  const double ld_star = model.log_density(prop.theta_star);
  const Eigen::VectorXd g_star = model.grad_log_density(prop.theta_star);
  if (!finite_scalar(ld_star) || !g_star.allFinite()) {
    return rejected(state, -INFINITY, true);
  }

  const double drift = 0.5 * eps * eps;
  const Eigen::VectorXd mean_rev = prop.theta_star + drift * b.solve(g_star);
  const double log_q_fwd =
      log_q_precond(prop.theta_star - prop.mean, b, eps, d);
  const double log_q_rev = log_q_precond(state.theta - mean_rev, b, eps, d);
  const double log_a = (ld_star - state.log_density) + (log_q_rev - log_q_fwd);

  StepOutcome out;
  out.log_accept_ratio = log_a;
  if (mh_accept(log_a, rng)) {
    out.accepted = true;
    out.state.theta = prop.theta_star;
    out.state.log_density = ld_star;
    out.state.grad = g_star;
  } else {
    out.state = state;
  }
  return out;
}

// --- chain driver ------------------------------------------------------------

void validate_capabilities(const SamplerConfig& cfg, const TargetModel& model) {
  const auto need_metric = [&](const char* k) {
    if (!model.has_metric()) {
      throw CapabilityError(std::string(k) + " requires a model metric");
    }
  };
  const auto need_derivs = [&](const char* k) {
    if (!model.has_metric_derivs()) {
      throw CapabilityError(std::string(k) +
                            " requires model metric derivatives");
    }
  };
  switch (cfg.kernel) {
    case KernelId::Rwm:
    case KernelId::Mala:
    case KernelId::DecoupledLangevin:
    case KernelId::QnPrecondMala:
      break;
    case KernelId::SimplifiedMmala:
      need_metric("simplified_mmala");
      break;
    case KernelId::FullMmala:
      need_metric("full_mmala");
      need_derivs("full_mmala");
      break;
    case KernelId::Hmc:
      need_metric("hmc");
      if (!model.constant_metric) {
        throw CapabilityError(
            "hmc requires a constant metric; use rmhmc for model '" +
            model.name + "'");
      }
      break;
    case KernelId::Rmhmc:
      need_metric("rmhmc");
      need_derivs("rmhmc");
      break;
    case KernelId::MultipotentialRmhmc:
      need_metric("multipotential_rmhmc");
      need_derivs("multipotential_rmhmc");
      break;
    case KernelId::ExtendedNoisyCc:
      if (!model.has_sample_metric()) {
        throw CapabilityError("extended_noisy_cc requires sample_metric");
      }
      break;
    case KernelId::ExtendedNoisyMmala:
      if (!model.has_sample_metric()) {
        throw CapabilityError("extended_noisy_mmala requires sample_metric");
      }
      if (!model.sampled_metric_derivs) {
        throw CapabilityError(
            "extended_noisy_mmala requires sampled metric derivatives");
      }
      break;
  }
}

ChainState make_chain_state(const TargetModel& model,
                            const Eigen::VectorXd& theta,
                            const SamplerConfig& cfg, Rng* rng) {
  model.check_dim(theta);
  ChainState s;
  s.theta = theta;
  s.log_density = model.log_density(theta);

  switch (cfg.kernel) {
    case KernelId::Rwm:
      break;
    case KernelId::Mala:
    case KernelId::DecoupledLangevin:
    case KernelId::QnPrecondMala:
    case KernelId::MultipotentialRmhmc:
      s.grad = model.grad_log_density(theta);
      break;
    case KernelId::SimplifiedMmala:
    case KernelId::Hmc:
      s.grad = model.grad_log_density(theta);
      s.metric = model.metric(theta);
      break;
    case KernelId::FullMmala:
    case KernelId::Rmhmc:
      s.grad = model.grad_log_density(theta);
      s.metric = model.metric(theta);
      s.metric_derivs = model.metric_derivs(theta);
      break;
    case KernelId::ExtendedNoisyCc:
    case KernelId::ExtendedNoisyMmala:
      s.grad = model.grad_log_density(theta);
      if (!rng) {
        throw McmcError("extended kernels need an rng to draw the initial "
                        "auxiliary metric");
      }
      s.aux = model.sample_metric(theta, *rng);
      break;
  }
  return s;
}

namespace {

std::string config_fingerprint(const SamplerConfig& cfg,
                               const TargetModel& model, std::uint64_t seed,
                               long n_steps) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  };
  const std::string kn = kernel_name(cfg.kernel);
  mix(kn.data(), kn.size());
  mix(model.name.data(), model.name.size());
  mix(&cfg.step_size, sizeof cfg.step_size);
  mix(&cfg.eta, sizeof cfg.eta);
  mix(&cfg.tau, sizeof cfg.tau);
  mix(&cfg.adjust, sizeof cfg.adjust);
  mix(&cfg.n_leapfrog, sizeof cfg.n_leapfrog);
  mix(&cfg.n_metrics, sizeof cfg.n_metrics);
  mix(&cfg.adapt_window, sizeof cfg.adapt_window);
  mix(&cfg.memory, sizeof cfg.memory);
  mix(&cfg.fp_tol, sizeof cfg.fp_tol);
  mix(&cfg.fp_max_iters, sizeof cfg.fp_max_iters);
  mix(&seed, sizeof seed);
  mix(&n_steps, sizeof n_steps);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace

Trace run_chain(const Eigen::VectorXd& initial, const SamplerConfig& cfg,
                const TargetModel& model, long n_steps, std::uint64_t seed,
                const std::vector<MetricField>& metrics) {
  cfg.validate();
  validate_capabilities(cfg, model);
  if (n_steps < 1) throw ValidationError("n_steps", "must be >= 1");

  std::vector<MetricField> fields = metrics;
  if (cfg.kernel == KernelId::MultipotentialRmhmc && fields.empty()) {
    fields.push_back(model_metric_field(model));
    for (int j = 1; j < cfg.n_metrics; ++j) {
      fields.push_back(identity_metric_field(model.dim));
    }
  }

  Rng rng(seed);
  ChainState state = make_chain_state(model, initial, cfg, &rng);
  QnAdapter adapter(model.dim, cfg.adapt_window, cfg.memory, cfg.gamma_min);

  const bool hamiltonian = cfg.kernel == KernelId::Hmc ||
                           cfg.kernel == KernelId::Rmhmc ||
                           cfg.kernel == KernelId::MultipotentialRmhmc;
  const bool fixed_point = cfg.kernel == KernelId::Rmhmc ||
                           cfg.kernel == KernelId::MultipotentialRmhmc;

  auto dispatch = [&](const ChainState& s) -> StepOutcome {
    switch (cfg.kernel) {
      case KernelId::Rwm: return rwm_step(s, cfg, model, rng);
      case KernelId::Mala: return mala_step(s, cfg, model, rng);
      case KernelId::DecoupledLangevin:
        return decoupled_langevin_step(s, cfg, model, rng);
      case KernelId::SimplifiedMmala:
        return simplified_mmala_step(s, cfg, model, rng);
      case KernelId::FullMmala: return full_mmala_step(s, cfg, model, rng);
      case KernelId::Hmc: return hmc_step(s, cfg, model, rng);
      case KernelId::Rmhmc: return rmhmc_step(s, cfg, model, rng);
      case KernelId::MultipotentialRmhmc:
        return multipotential_rmhmc_step(s, cfg, model, fields, rng);
      case KernelId::ExtendedNoisyCc:
        return extended_noisy_cc_step(s, cfg, model, rng);
      case KernelId::ExtendedNoisyMmala:
        return extended_noisy_mmala_step(s, cfg, model, rng);
      case KernelId::QnPrecondMala:
        return qn_precond_mala_step(s, cfg, model, rng, adapter);
    }
    throw McmcError("unreachable kernel dispatch");
  };

  // Quasi-Newton warmup: adapt, then report the frozen phase only, which is a
  // time-homogeneous Markov chain under the constant metric B.
  long step_base = 0;
  if (cfg.kernel == KernelId::QnPrecondMala) {
    for (int w = 0; w < cfg.adapt_window; ++w) {
      try {
        state = dispatch(state).state;
      } catch (const NonFiniteState& e) {
        throw ChainAbort(w + 1, e.what());
      }
      ++step_base;
    }
    adapter.freeze();
  }

  Trace trace;
  trace.seed = seed;
  trace.fingerprint = config_fingerprint(cfg, model, seed, n_steps);
  const std::size_t total = static_cast<std::size_t>(n_steps) + 1;
  trace.states.reserve(total);
  trace.accepted.reserve(total);

  trace.states.push_back(state.theta);
  trace.accepted.push_back(1);
  auto& accept_series = trace.diag["log_accept"];
  accept_series.reserve(total);
  accept_series.push_back(0.0);
  std::vector<double>* dh_series = nullptr;
  std::vector<double>* div_series = nullptr;
  std::vector<double>* fp_series = nullptr;
  std::vector<double>* j_series = nullptr;
  if (hamiltonian) {
    dh_series = &trace.diag["dH"];
    dh_series->assign(1, 0.0);
    div_series = &trace.diag["divergent"];
    div_series->assign(1, 0.0);
  }
  if (fixed_point) {
    fp_series = &trace.diag["fp_iters"];
    fp_series->assign(1, 0.0);
  }
  if (cfg.kernel == KernelId::MultipotentialRmhmc) {
    j_series = &trace.diag["j"];
    j_series->assign(1, 0.0);
  }
  if (cfg.kernel == KernelId::QnPrecondMala) {
    trace.notes["qn_b_fingerprint"] = adapter.fingerprint();
  }

  for (long t = 1; t <= n_steps; ++t) {
    StepOutcome out;
    try {
      out = dispatch(state);
    } catch (const NonFiniteState& e) {
      throw ChainAbort(step_base + t, e.what());
    }
    if (cfg.kernel == KernelId::QnPrecondMala &&
        trace.notes["qn_b_fingerprint"] != adapter.fingerprint()) {
      throw McmcError("quasi-Newton metric changed during the frozen phase");
    }
    trace.states.push_back(out.state.theta);
    trace.accepted.push_back(out.accepted ? 1 : 0);
    accept_series.push_back(out.log_accept_ratio);
    if (dh_series) {
      dh_series->push_back(out.delta_h.value_or(0.0));
      div_series->push_back(out.divergent ? 1.0 : 0.0);
    }
    if (fp_series) fp_series->push_back(out.fp_iters.value_or(0));
    if (j_series) j_series->push_back(out.chosen_index.value_or(-1));
    state = std::move(out.state);
  }
  return trace;
}

}  // namespace manifold_mcmc
