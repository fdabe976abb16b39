#include "manifold_mcmc/experiment.hpp"

#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

namespace manifold_mcmc {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void check_keys(const json& obj, const std::set<std::string>& allowed,
                const std::string& context) {
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) {
      throw ValidationError(context + "." + key, "unknown key");
    }
  }
}

double get_number(const json& obj, const std::string& key, double fallback,
                  const std::string& context) {
  if (!obj.contains(key)) return fallback;
  if (!obj.at(key).is_number()) {
    throw ValidationError(context + "." + key, "must be a number");
  }
  return obj.at(key).get<double>();
}

}  // namespace

TargetModel build_model(const json& spec) {
  if (!spec.is_object() || !spec.contains("name")) {
    throw ValidationError("model", "must be an object with a 'name'");
  }
  const std::string name = spec.at("name").get<std::string>();
  TargetModel model;

  if (name == "gaussian") {
    check_keys(spec, {"name", "mean", "cov", "noisy_metric"}, "model");
    if (!spec.contains("mean") || !spec.contains("cov")) {
      throw ValidationError("model", "gaussian needs 'mean' and 'cov'");
    }
    const auto mean_vec = spec.at("mean").get<std::vector<double>>();
    const int d = static_cast<int>(mean_vec.size());
    Eigen::VectorXd mean =
        Eigen::Map<const Eigen::VectorXd>(mean_vec.data(), d);
    const auto rows = spec.at("cov").get<std::vector<std::vector<double>>>();
    if (static_cast<int>(rows.size()) != d) {
      throw ValidationError("model.cov", "must be DxD");
    }
    Eigen::MatrixXd cov(d, d);
    for (int i = 0; i < d; ++i) {
      if (static_cast<int>(rows[i].size()) != d) {
        throw ValidationError("model.cov", "must be DxD");
      }
      for (int j = 0; j < d; ++j) cov(i, j) = rows[i][j];
    }
    model = make_gaussian(mean, cov);
  } else if (name == "quartic") {
    check_keys(spec, {"name", "noisy_metric"}, "model");
    model = make_quartic();
  } else if (name == "logistic") {
    check_keys(spec, {"name", "csv", "synthetic", "prior_variance",
                      "noisy_metric"},
               "model");
    const double alpha =
        get_number(spec, "prior_variance", 100.0, "model");
    if (spec.contains("csv") == spec.contains("synthetic")) {
      throw ValidationError("model",
                            "logistic needs exactly one of 'csv'/'synthetic'");
    }
    if (spec.contains("csv")) {
      const std::string path = spec.at("csv").get<std::string>();
      if (!fs::exists(path)) {
        throw ValidationError("model.csv", "file does not exist: " + path);
      }
      model = make_logistic(load_logistic_csv(path, alpha));
    } else {
      const json& syn = spec.at("synthetic");
      check_keys(syn, {"dim", "n", "seed"}, "model.synthetic");
      const int dim = static_cast<int>(get_number(syn, "dim", 5, "model.synthetic"));
      const int n = static_cast<int>(get_number(syn, "n", 100, "model.synthetic"));
      const auto seed = static_cast<std::uint64_t>(
          get_number(syn, "seed", 7, "model.synthetic"));
      model = make_logistic(make_logistic_synthetic(dim, n, seed, alpha));
    }
  } else {
    throw ValidationError("model.name", "unknown model '" + name + "'");
  }

  if (spec.contains("noisy_metric")) {
    const json& noisy = spec.at("noisy_metric");
    check_keys(noisy, {"dof"}, "model.noisy_metric");
    if (!noisy.contains("dof")) {
      throw ValidationError("model.noisy_metric", "needs 'dof'");
    }
    model = wrap_noisy_metric(model, noisy.at("dof").get<double>());
  }
  return model;
}

ExperimentConfig parse_config_json(const json& doc) {
  if (!doc.is_object()) throw ParseError("config root must be an object");
  check_keys(doc,
             {"model", "kernel", "n_steps", "n_chains", "seed", "burn_in",
              "thinning", "initial", "out_dir"},
             "config");
  if (!doc.contains("model") || !doc.contains("kernel")) {
    throw ValidationError("config", "needs 'model' and 'kernel'");
  }

  ExperimentConfig cfg;
  cfg.model_spec = doc.at("model");

  const json& k = doc.at("kernel");
  check_keys(k,
             {"name", "step_size", "eta", "tau", "adjust", "n_leapfrog",
              "n_metrics", "metrics", "adapt_window", "memory", "gamma_min",
              "fp_tol", "fp_max_iters"},
             "kernel");
  if (!k.contains("name")) throw ValidationError("kernel", "needs 'name'");
  cfg.kernel.kernel = kernel_from_name(k.at("name").get<std::string>());
  cfg.kernel.step_size =
      get_number(k, "step_size", cfg.kernel.step_size, "kernel");
  cfg.kernel.eta = get_number(k, "eta", cfg.kernel.eta, "kernel");
  cfg.kernel.tau = get_number(k, "tau", cfg.kernel.tau, "kernel");
  if (k.contains("adjust")) cfg.kernel.adjust = k.at("adjust").get<bool>();
  cfg.kernel.n_leapfrog = static_cast<int>(
      get_number(k, "n_leapfrog", cfg.kernel.n_leapfrog, "kernel"));
  cfg.kernel.n_metrics = static_cast<int>(
      get_number(k, "n_metrics", cfg.kernel.n_metrics, "kernel"));
  cfg.kernel.adapt_window = static_cast<int>(
      get_number(k, "adapt_window", cfg.kernel.adapt_window, "kernel"));
  cfg.kernel.memory =
      static_cast<int>(get_number(k, "memory", cfg.kernel.memory, "kernel"));
  cfg.kernel.gamma_min =
      get_number(k, "gamma_min", cfg.kernel.gamma_min, "kernel");
  cfg.kernel.fp_tol = get_number(k, "fp_tol", cfg.kernel.fp_tol, "kernel");
  cfg.kernel.fp_max_iters = static_cast<int>(
      get_number(k, "fp_max_iters", cfg.kernel.fp_max_iters, "kernel"));
  if (k.contains("metrics")) {
    cfg.metric_names = k.at("metrics").get<std::vector<std::string>>();
    for (const std::string& m : cfg.metric_names) {
      if (m != "model" && m != "identity") {
        throw ValidationError("kernel.metrics",
                              "entries must be 'model' or 'identity'");
      }
    }
    cfg.kernel.n_metrics = static_cast<int>(cfg.metric_names.size());
  }
  cfg.kernel.validate();

  cfg.n_steps =
      static_cast<long>(get_number(doc, "n_steps", cfg.n_steps, "config"));
  if (cfg.n_steps < 1) throw ValidationError("n_steps", "must be >= 1");
  cfg.n_chains =
      static_cast<int>(get_number(doc, "n_chains", cfg.n_chains, "config"));
  if (cfg.n_chains < 1) throw ValidationError("n_chains", "must be >= 1");
  cfg.seed = static_cast<std::uint64_t>(
      get_number(doc, "seed", static_cast<double>(cfg.seed), "config"));
  cfg.burn_in = get_number(doc, "burn_in", cfg.burn_in, "config");
  if (!(cfg.burn_in >= 0.0 && cfg.burn_in < 1.0)) {
    throw ValidationError("burn_in", "must be in [0, 1)");
  }
  cfg.thinning =
      static_cast<int>(get_number(doc, "thinning", cfg.thinning, "config"));
  if (cfg.thinning < 1) throw ValidationError("thinning", "must be >= 1");
  if (doc.contains("out_dir")) {
    cfg.out_dir = doc.at("out_dir").get<std::string>();
  }

  // Build the model once now: validates the model description, referenced
  // files and kernel capability requirements before any chain runs.
  const TargetModel model = build_model(cfg.model_spec);
  validate_capabilities(cfg.kernel, model);

  if (doc.contains("initial")) {
    const auto init = doc.at("initial").get<std::vector<double>>();
    if (static_cast<int>(init.size()) != model.dim) {
      throw ValidationError("initial", "length must match model dim");
    }
    cfg.initial =
        Eigen::Map<const Eigen::VectorXd>(init.data(), init.size());
  }
  return cfg;
}

ExperimentConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config file: " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError("config " + path + ": " + e.what());
  }
  return parse_config_json(doc);
}

std::vector<MetricField> build_metric_fields(const ExperimentConfig& cfg,
                                             const TargetModel& model) {
  std::vector<MetricField> fields;
  if (cfg.kernel.kernel != KernelId::MultipotentialRmhmc) return fields;
  if (cfg.metric_names.empty()) return fields;  // run_chain defaults
  for (const std::string& name : cfg.metric_names) {
    fields.push_back(name == "model" ? model_metric_field(model)
                                     : identity_metric_field(model.dim));
  }
  return fields;
}

bool ExperimentSummary::any_aborted() const {
  for (const ChainSummary& c : chains) {
    if (c.aborted) return true;
  }
  return false;
}

json ExperimentSummary::to_json() const {
  json out;
  out["fingerprint"] = fingerprint;
  out["model"] = model_name;
  out["kernel"] = kernel;
  out["chains"] = json::array();
  for (const ChainSummary& c : chains) {
    json jc;
    jc["chain"] = c.chain;
    jc["seed"] = c.seed;
    jc["aborted"] = c.aborted;
    if (c.aborted) {
      jc["abort_message"] = c.abort_message;
    } else {
      jc["acceptance_rate"] = c.acceptance_rate;
      jc["ess"] = c.ess;
      jc["mean"] = c.mean;
      jc["covariance"] = c.covariance;
      jc["mcse"] = c.mcse;
      if (c.energy) {
        jc["energy"] = {{"mean_abs_dH", c.energy->mean_abs_delta_h},
                        {"max_abs_dH", c.energy->max_abs_delta_h},
                        {"divergences", c.energy->divergences}};
      }
      if (c.ks) jc["ks"] = *c.ks;
    }
    jc["wall_clock_s"] = c.wall_clock_s;
    out["chains"].push_back(std::move(jc));
  }
  return out;
}

namespace {

void format_double(std::string& line, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  line += buf;
}

}  // namespace

void write_trace_csv(const Trace& trace, const std::string& path,
                     int thinning) {
  if (thinning < 1) throw ValidationError("thinning", "must be >= 1");
  std::ofstream out(path);
  if (!out) throw McmcError("cannot open trace file for writing: " + path);

  const int d = trace.dim();
  const bool has_dh = trace.diag.count("dH") > 0;
  const bool has_fp = trace.diag.count("fp_iters") > 0;
  const bool has_j = trace.diag.count("j") > 0;

  std::string line = "step,accepted";
  for (int c = 0; c < d; ++c) line += ",theta_" + std::to_string(c + 1);
  if (has_dh) line += ",dH";
  if (has_fp) line += ",fp_iters";
  if (has_j) line += ",j";
  out << line << "\n";

  for (std::size_t t = 0; t < trace.length(); t += thinning) {
    line = std::to_string(t);
    line += ',';
    line += trace.accepted[t] ? '1' : '0';
    for (int c = 0; c < d; ++c) {
      line += ',';
      format_double(line, trace.states[t][c]);
    }
    if (has_dh) {
      line += ',';
      format_double(line, trace.diag.at("dH")[t]);
    }
    if (has_fp) {
      line += ',';
      line += std::to_string(
          static_cast<long>(trace.diag.at("fp_iters")[t]));
    }
    if (has_j) {
      line += ',';
      line +=
          std::to_string(static_cast<long>(trace.diag.at("j")[t]));
    }
    out << line << "\n";
  }
}

Trace load_trace_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open trace file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty trace file: " + path);

  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  if (header.size() < 3 || header[0] != "step" || header[1] != "accepted") {
    throw ParseError("unexpected trace header in " + path);
  }
  int d = 0;
  while (2 + d < static_cast<int>(header.size()) &&
         header[2 + d].rfind("theta_", 0) == 0) {
    ++d;
  }
  if (d == 0) throw ParseError("trace has no theta columns: " + path);

  Trace trace;
  trace.notes["loaded_from"] = path;
  std::vector<std::string> extras(header.begin() + 2 + d, header.end());
  for (const std::string& name : extras) trace.diag[name];

  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');  // step index (implicit)
    std::getline(ss, cell, ',');
    trace.accepted.push_back(cell == "1" ? 1 : 0);
    Eigen::VectorXd theta(d);
    for (int c = 0; c < d; ++c) {
      std::getline(ss, cell, ',');
      theta[c] = std::stod(cell);
    }
    trace.states.push_back(std::move(theta));
    for (const std::string& name : extras) {
      std::getline(ss, cell, ',');
      trace.diag[name].push_back(std::stod(cell));
    }
  }
  return trace;
}

ExperimentSummary run_experiment(const ExperimentConfig& cfg) {
  const TargetModel model = build_model(cfg.model_spec);
  validate_capabilities(cfg.kernel, model);
  const std::vector<MetricField> fields = build_metric_fields(cfg, model);

  fs::create_directories(cfg.out_dir);

  Eigen::VectorXd initial =
      cfg.initial ? *cfg.initial : Eigen::VectorXd::Zero(model.dim);

  int thread_cap = cfg.n_chains;
  if (const char* env = std::getenv("MANIFOLD_MCMC_THREADS")) {
    const int cap = std::atoi(env);
    if (cap >= 1) thread_cap = std::min(thread_cap, cap);
  }

  ExperimentSummary summary;
  summary.model_name = model.name;
  summary.kernel = kernel_name(cfg.kernel.kernel);
  summary.chains.resize(cfg.n_chains);
  {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](const std::string& text) {
      for (unsigned char byte : text) {
        h ^= byte;
        h *= 1099511628211ULL;
      }
    };
    mix(cfg.model_spec.dump());
    mix(summary.kernel);
    mix(std::to_string(cfg.seed));
    mix(std::to_string(cfg.n_steps));
    mix(std::to_string(cfg.kernel.step_size));
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(h));
    summary.fingerprint = buf;
  }

  std::atomic<int> next{0};
  auto worker = [&] {
    for (;;) {
      const int c = next.fetch_add(1);
      if (c >= cfg.n_chains) return;
      ChainSummary& cs = summary.chains[c];
      cs.chain = c;
      cs.seed = Rng::sub_seed(cfg.seed, static_cast<std::uint64_t>(c));
      const auto t0 = std::chrono::steady_clock::now();
      try {
        Trace trace =
            run_chain(initial, cfg.kernel, model, cfg.n_steps, cs.seed, fields);

        long n_accepted = 0;
        for (std::size_t t = 1; t < trace.length(); ++t) {
          n_accepted += trace.accepted[t];
        }
        cs.acceptance_rate = static_cast<double>(n_accepted) /
                             static_cast<double>(trace.length() - 1);

        const Moments m = moments(trace, cfg.burn_in);
        const int d = trace.dim();
        cs.mean.assign(m.mean.data(), m.mean.data() + d);
        cs.mcse.assign(m.mcse.data(), m.mcse.data() + d);
        cs.covariance.assign(d, std::vector<double>(d));
        for (int i = 0; i < d; ++i) {
          for (int j = 0; j < d; ++j) cs.covariance[i][j] = m.covariance(i, j);
        }
        cs.ess.resize(d);
        for (int i = 0; i < d; ++i) cs.ess[i] = ess(trace, i);
        if (trace.diag.count("dH")) cs.energy = energy_stats(trace);
        if (model.cdf_1d && d == 1) {
          cs.ks = ks_statistic_1d(trace, model.cdf_1d, cfg.burn_in);
        }

        write_trace_csv(trace,
                        cfg.out_dir + "/trace_chain_" + std::to_string(c) +
                            ".csv",
                        cfg.thinning);
      } catch (const std::exception& e) {
        cs.aborted = true;
        cs.abort_message = e.what();
      }
      cs.wall_clock_s =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
              .count();
    }
  };

  std::vector<std::thread> pool;
  pool.reserve(thread_cap);
  for (int i = 0; i < thread_cap; ++i) pool.emplace_back(worker);
  for (std::thread& t : pool) t.join();

  std::ofstream out(cfg.out_dir + "/summary.json");
  out << summary.to_json().dump(2) << "\n";
  return summary;
}

// --- presets ----------------------------------------------------------------

namespace {

json base_config(const char* text) { return json::parse(text); }

std::vector<Preset> make_presets() {
  std::vector<Preset> out;

  {
    Preset p;
    p.name = "figure1";
    p.description =
        "Unadjusted Langevin on the quartic target at two discretisation "
        "steps (tau^2 = 1e-2 vs 1e-4); the summary KS distances show the "
        "coarser step fitting far better at a fixed budget.";
    json coarse = base_config(R"({
      "model": {"name": "quartic"},
      "kernel": {"name": "decoupled_langevin", "adjust": false,
                 "tau": 0.1, "eta": 0.005},
      "n_steps": 100000, "n_chains": 5, "seed": 1, "thinning": 10
    })");
    json fine = coarse;
    fine["kernel"]["tau"] = 0.01;
    fine["kernel"]["eta"] = 5e-05;
    p.variants = {{"tau2_1e-2", coarse}, {"tau2_1e-4", fine}};
    out.push_back(std::move(p));
  }

  {
    Preset p;
    p.name = "logistic-compare";
    p.description =
        "MALA vs simplified MMALA on the synthetic logistic posterior "
        "(D=5, n=100), each at its grid-tuned step size.";
    json mala = base_config(R"({
      "model": {"name": "logistic", "synthetic": {"dim": 5, "n": 100, "seed": 7}},
      "kernel": {"name": "mala", "step_size": 0.5},
      "n_steps": 20000, "n_chains": 4, "seed": 7, "thinning": 1
    })");
    json mmala = mala;
    mmala["kernel"] = {{"name", "simplified_mmala"}, {"step_size", 1.0}};
    p.variants = {{"mala", mala}, {"simplified_mmala", mmala}};
    out.push_back(std::move(p));
  }

  {
    Preset p;
    p.name = "noisy-metric-validate";
    p.description =
        "Extended-space constant-curvature kernel with Wishart(10) metric "
        "noise on the correlated Gaussian; the summary moments validate that "
        "the target stays invariant.";
    json cfg = base_config(R"({
      "model": {"name": "gaussian", "mean": [0.0, 0.0],
                "cov": [[1.0, 0.9], [0.9, 1.0]],
                "noisy_metric": {"dof": 10.0}},
      "kernel": {"name": "extended_noisy_cc", "step_size": 0.8},
      "n_steps": 200000, "n_chains": 2, "seed": 42, "thinning": 10
    })");
    p.variants = {{"wishart_dof10", cfg}};
    out.push_back(std::move(p));
  }

  {
    Preset p;
    p.name = "multipotential-demo";
    p.description =
        "Multi-potential kernel alternating between the Fisher metric and "
        "the identity on the correlated Gaussian.";
    json cfg = base_config(R"({
      "model": {"name": "gaussian", "mean": [0.0, 0.0],
                "cov": [[1.0, 0.9], [0.9, 1.0]]},
      "kernel": {"name": "multipotential_rmhmc", "metrics": ["model", "identity"],
                 "step_size": 0.35, "n_leapfrog": 5},
      "n_steps": 100000, "n_chains": 2, "seed": 42, "thinning": 10
    })");
    p.variants = {{"fisher_plus_identity", cfg}};
    out.push_back(std::move(p));
  }

  return out;
}

}  // namespace

const std::vector<Preset>& presets() {
  static const std::vector<Preset> all = make_presets();
  return all;
}

const Preset* find_preset(const std::string& name) {
  for (const Preset& p : presets()) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw ValidationError("override", "expected key=value: " + assignment);
  }
  const std::string path = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);

  json* node = &doc;
  std::size_t begin = 0;
  for (;;) {
    const std::size_t dot = path.find('.', begin);
    const std::string key = path.substr(begin, dot - begin);
    if (key.empty()) throw ValidationError("override", "empty key in " + path);
    if (dot == std::string::npos) {
      json parsed = json::parse(value, nullptr, /*allow_exceptions=*/false);
      (*node)[key] = parsed.is_discarded() ? json(value) : parsed;
      return;
    }
    node = &(*node)[key];
    begin = dot + 1;
  }
}

}  // namespace manifold_mcmc
