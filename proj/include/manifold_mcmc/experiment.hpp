#pragma once

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

#include "manifold_mcmc/diagnostics.hpp"
#include "manifold_mcmc/samplers.hpp"
#include "manifold_mcmc/targets.hpp"

namespace manifold_mcmc {

/// Fully validated batch-run description. parse_config fills defaults
/// (burn_in 0.25, thinning 1, n_chains 1), rejects unknown keys and checks
/// that the model can satisfy the kernel's capability requirements.
struct ExperimentConfig {
  nlohmann::json model_spec;
  SamplerConfig kernel;
  std::vector<std::string> metric_names;  // multi-potential: "model"/"identity"
  long n_steps = 1000;
  int n_chains = 1;
  std::uint64_t seed = 1;
  double burn_in = 0.25;
  int thinning = 1;
  std::optional<Eigen::VectorXd> initial;  // default: origin
  std::string out_dir = "runs";
};

ExperimentConfig parse_config(const std::string& path);
ExperimentConfig parse_config_json(const nlohmann::json& doc);

/// Instantiates the model a config refers to (including the noisy-metric
/// wrapper when requested).
TargetModel build_model(const nlohmann::json& model_spec);

/// Metric fields for the multi-potential kernel per the config's
/// `metrics` list; defaults to ["model", "identity", ...].
std::vector<MetricField> build_metric_fields(const ExperimentConfig& cfg,
                                             const TargetModel& model);

struct ChainSummary {
  int chain = 0;
  std::uint64_t seed = 0;
  double acceptance_rate = 0.0;
  std::vector<double> ess;
  std::vector<double> mean;
  std::vector<std::vector<double>> covariance;
  std::vector<double> mcse;
  std::optional<EnergyStats> energy;
  std::optional<double> ks;
  double wall_clock_s = 0.0;
  bool aborted = false;
  std::string abort_message;
};

struct ExperimentSummary {
  std::string fingerprint;
  std::string model_name;
  std::string kernel;
  std::vector<ChainSummary> chains;

  bool any_aborted() const;
  nlohmann::json to_json() const;
};

/// Runs n_chains seeded chains (sub-seeds derived deterministically from the
/// master seed), writes one CSV trace per chain plus summary.json under
/// out_dir, and returns the summary. Chains run concurrently up to the
/// MANIFOLD_MCMC_THREADS cap; a chain abort is recorded without killing
/// sibling chains. Summary statistics always come from the unthinned stream.
ExperimentSummary run_experiment(const ExperimentConfig& cfg);

/// Trace CSV: header step,accepted,theta_1..theta_D[,dH,fp_iters,j], doubles
/// printed with 17 significant digits. Rows are thinned; step 0 is always
/// present.
void write_trace_csv(const Trace& trace, const std::string& path,
                     int thinning);
Trace load_trace_csv(const std::string& path);

struct Preset {
  std::string name;
  std::string description;
  std::vector<std::pair<std::string, nlohmann::json>> variants;
};

const std::vector<Preset>& presets();
const Preset* find_preset(const std::string& name);

/// Applies a `--override key=value` assignment (dotted path) to a config
/// document. The value is parsed as JSON when possible, else kept as string.
void apply_override(nlohmann::json& doc, const std::string& assignment);

}  // namespace manifold_mcmc
