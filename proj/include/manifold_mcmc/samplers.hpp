#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "manifold_mcmc/geometry.hpp"
#include "manifold_mcmc/targets.hpp"

namespace manifold_mcmc {

enum class KernelId {
  Rwm,
  Mala,
  DecoupledLangevin,
  SimplifiedMmala,
  FullMmala,
  Hmc,
  Rmhmc,
  MultipotentialRmhmc,
  ExtendedNoisyCc,
  ExtendedNoisyMmala,
  QnPrecondMala,
};

KernelId kernel_from_name(const std::string& name);
std::string kernel_name(KernelId id);

/// Kernel selection plus every tuning scalar. Fields not used by the selected
/// kernel are ignored.
struct SamplerConfig {
  KernelId kernel = KernelId::Mala;
  double step_size = 0.5;  // epsilon
  double eta = 0.0;        // decoupled Langevin drift scale
  double tau = 1.0;        // decoupled Langevin noise scale
  bool adjust = true;      // Metropolis correction (decoupled Langevin)
  int n_leapfrog = 10;     // L
  int n_metrics = 1;       // k (multi-potential)
  int adapt_window = 1000; // W (quasi-Newton warmup length)
  int memory = 30;         // m (quasi-Newton pair memory)
  double gamma_min = 1e-6;
  double fp_tol = 1e-10;
  int fp_max_iters = 100;

  void validate() const;
};

/// Current position with whatever the owning kernel needs cached at it, plus
/// the auxiliary metric draw for extended-space kernels.
struct ChainState {
  Eigen::VectorXd theta;
  double log_density = 0.0;
  std::optional<Eigen::VectorXd> grad;
  std::optional<MetricTensor> metric;
  std::optional<std::vector<Eigen::MatrixXd>> metric_derivs;
  std::optional<SampledMetric> aux;
};

struct StepOutcome {
  ChainState state;
  bool accepted = false;
  double log_accept_ratio = 0.0;
  std::optional<double> delta_h;
  std::optional<int> fp_iters;
  std::optional<int> chosen_index;
  bool divergent = false;  // forced rejection (non-finite / bad metric / fp failure)
};

/// Metric callable pair used by the multi-potential kernel.
struct MetricField {
  std::function<MetricTensor(const Eigen::VectorXd&)> metric;
  std::function<std::vector<Eigen::MatrixXd>(const Eigen::VectorXd&)> derivs;
  bool constant = false;
};

MetricField model_metric_field(const TargetModel& model);
MetricField identity_metric_field(int dim);

/// Limited-memory secant estimate of -Hessian(log density), maintained from
/// (position, gradient) pairs during the warmup phase of the quasi-Newton
/// kernel and frozen afterwards.
class QnAdapter {
 public:
  QnAdapter(int dim, int window, int memory, double gamma_min);

  /// Records a move; pairs with s'y <= 0 are skipped.
  void observe(const Eigen::VectorXd& theta_old,
               const Eigen::VectorXd& grad_old,
               const Eigen::VectorXd& theta_new,
               const Eigen::VectorXd& grad_new);

  void freeze();
  bool frozen() const { return frozen_; }
  int observations() const { return observations_; }
  int window() const { return window_; }
  int pair_count() const { return static_cast<int>(pairs_.size()); }

  /// Current curvature estimate B (materialized dense).
  Eigen::MatrixXd curvature() const;

  /// Frozen metric; only valid after freeze().
  const MetricTensor& metric() const;

  /// FNV-1a hash of the frozen B bytes, hex-encoded.
  std::string fingerprint() const;

 private:
  struct Pair {
    Eigen::VectorXd s;
    Eigen::VectorXd y;
  };

  Eigen::VectorXd apply_inverse(const Eigen::VectorXd& v) const;  // H v

  int dim_;
  int window_;
  int memory_;
  double gamma_min_;
  int observations_ = 0;
  bool frozen_ = false;
  std::deque<Pair> pairs_;
  std::optional<MetricTensor> frozen_metric_;
  std::string fingerprint_;
};

// --- transition kernels -----------------------------------------------------
// Each performs one step and returns the new state plus acceptance
// diagnostics. Divergent proposals (non-finite values, failed factorizations,
// failed fixed-point solves) become rejections; the input state is returned
// unchanged, auxiliary draw included.

StepOutcome rwm_step(const ChainState& state, const SamplerConfig& cfg,
                     const TargetModel& model, Rng& rng);

StepOutcome mala_step(const ChainState& state, const SamplerConfig& cfg,
                      const TargetModel& model, Rng& rng);

StepOutcome decoupled_langevin_step(const ChainState& state,
                                    const SamplerConfig& cfg,
                                    const TargetModel& model, Rng& rng);

StepOutcome simplified_mmala_step(const ChainState& state,
                                  const SamplerConfig& cfg,
                                  const TargetModel& model, Rng& rng);

StepOutcome full_mmala_step(const ChainState& state, const SamplerConfig& cfg,
                            const TargetModel& model, Rng& rng);

StepOutcome hmc_step(const ChainState& state, const SamplerConfig& cfg,
                     const TargetModel& model, Rng& rng);

StepOutcome rmhmc_step(const ChainState& state, const SamplerConfig& cfg,
                       const TargetModel& model, Rng& rng);

StepOutcome multipotential_rmhmc_step(const ChainState& state,
                                      const SamplerConfig& cfg,
                                      const TargetModel& model,
                                      const std::vector<MetricField>& metrics,
                                      Rng& rng);

StepOutcome extended_noisy_cc_step(const ChainState& state,
                                   const SamplerConfig& cfg,
                                   const TargetModel& model, Rng& rng);

StepOutcome extended_noisy_mmala_step(const ChainState& state,
                                      const SamplerConfig& cfg,
                                      const TargetModel& model, Rng& rng);

StepOutcome qn_precond_mala_step(const ChainState& state,
                                 const SamplerConfig& cfg,
                                 const TargetModel& model, Rng& rng,
                                 QnAdapter& adapter);

// --- chain driver ------------------------------------------------------------

/// Ordered record of a chain run: states[0] is the initial point, and series
/// index t corresponds to the state after step t. All series share the same
/// length.
struct Trace {
  std::vector<Eigen::VectorXd> states;
  std::vector<std::uint8_t> accepted;
  std::map<std::string, std::vector<double>> diag;
  std::uint64_t seed = 0;
  std::string fingerprint;
  std::map<std::string, std::string> notes;

  int dim() const {
    return states.empty() ? 0 : static_cast<int>(states.front().size());
  }
  std::size_t length() const { return states.size(); }
};

/// Throws CapabilityError when the kernel needs a capability the model does
/// not expose.
void validate_capabilities(const SamplerConfig& cfg, const TargetModel& model);

/// Builds the cached state the configured kernel expects at `theta`. Extended
/// kernels draw their initial auxiliary metric from `rng`.
ChainState make_chain_state(const TargetModel& model,
                            const Eigen::VectorXd& theta,
                            const SamplerConfig& cfg, Rng* rng = nullptr);

/// Iterates the configured kernel for n_steps. Bit-reproducible for a fixed
/// seed. For the quasi-Newton kernel the adaptation window runs first and only
/// the frozen phase is reported. `metrics` feeds the multi-potential kernel;
/// when empty it defaults to the model metric plus identity fields.
Trace run_chain(const Eigen::VectorXd& initial, const SamplerConfig& cfg,
                const TargetModel& model, long n_steps, std::uint64_t seed,
                const std::vector<MetricField>& metrics = {});

}  // namespace manifold_mcmc
