#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "manifold_mcmc/diagnostics.hpp"
#include "manifold_mcmc/experiment.hpp"

using namespace manifold_mcmc;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json minimal_config() {
  return json::parse(R"({
    "model": {"name": "quartic"},
    "kernel": {"name": "mala", "step_size": 0.5},
    "n_steps": 1000,
    "seed": 1
  })");
}

std::string file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::path("tmp_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("parse_config: defaults are filled") {
  const ExperimentConfig cfg = parse_config_json(minimal_config());
  CHECK(cfg.burn_in == 0.25);
  CHECK(cfg.thinning == 1);
  CHECK(cfg.n_chains == 1);
  CHECK(cfg.n_steps == 1000);
  CHECK(cfg.seed == 1);
  CHECK(cfg.kernel.kernel == KernelId::Mala);
}

TEST_CASE("parse_config: unknown keys are errors") {
  json doc = minimal_config();
  doc["n_stepz"] = 100;
  CHECK_THROWS_AS(parse_config_json(doc), ValidationError);

  doc = minimal_config();
  doc["kernel"]["stepsize"] = 0.5;
  CHECK_THROWS_AS(parse_config_json(doc), ValidationError);

  doc = minimal_config();
  doc["model"]["extra"] = 1;
  CHECK_THROWS_AS(parse_config_json(doc), ValidationError);
}

TEST_CASE("parse_config: capability screening") {
  // rmhmc on the quartic: fine, the constant unit metric satisfies it
  json doc = minimal_config();
  doc["kernel"] = {{"name", "rmhmc"}, {"step_size", 0.5}};
  CHECK_NOTHROW(parse_config_json(doc));

  // extended kernel without a sampled metric: rejected before running
  doc = json::parse(R"({
    "model": {"name": "gaussian", "mean": [0.0, 0.0],
              "cov": [[1.0, 0.9], [0.9, 1.0]]},
    "kernel": {"name": "extended_noisy_cc"},
    "n_steps": 100
  })");
  CHECK_THROWS_AS(parse_config_json(doc), CapabilityError);

  // with the Wishart wrapper it validates
  doc["model"]["noisy_metric"] = {{"dof", 10.0}};
  CHECK_NOTHROW(parse_config_json(doc));

  // hmc needs a constant metric
  doc = json::parse(R"({
    "model": {"name": "logistic", "synthetic": {"dim": 3, "n": 30, "seed": 1}},
    "kernel": {"name": "hmc"},
    "n_steps": 100
  })");
  CHECK_THROWS_AS(parse_config_json(doc), CapabilityError);
}

TEST_CASE("parse_config: missing csv is caught at validation time") {
  json doc = json::parse(R"({
    "model": {"name": "logistic", "csv": "no_such_file.csv"},
    "kernel": {"name": "mala"},
    "n_steps": 100
  })");
  CHECK_THROWS_AS(parse_config_json(doc), ValidationError);
}

TEST_CASE("parse_config: malformed json is a parse error") {
  const std::string path = "broken_config.json";
  {
    std::ofstream out(path);
    out << "{\"model\": ";
  }
  CHECK_THROWS_AS(parse_config(path), ParseError);
  fs::remove(path);
}

TEST_CASE("run_experiment: summary statistics match a recomputation from the trace file") {
  TempDir dir("exp_recompute");
  json doc = minimal_config();
  doc["n_steps"] = 5000;
  doc["out_dir"] = dir.path.string();
  const ExperimentConfig cfg = parse_config_json(doc);
  const ExperimentSummary summary = run_experiment(cfg);
  REQUIRE(summary.chains.size() == 1);
  REQUIRE(!summary.chains[0].aborted);

  const Trace loaded =
      load_trace_csv((dir.path / "trace_chain_0.csv").string());
  REQUIRE(loaded.length() == 5001);
  const Moments m = moments(loaded, cfg.burn_in);
  CHECK(std::abs(m.mean[0] - summary.chains[0].mean[0]) <= 1e-12);
  CHECK(std::abs(m.covariance(0, 0) - summary.chains[0].covariance[0][0]) <=
        1e-12);
  CHECK(std::abs(ess(loaded, 0) - summary.chains[0].ess[0]) <= 1e-12);

  // quartic: the KS distance against the model CDF is part of the summary
  REQUIRE(summary.chains[0].ks.has_value());
  CHECK(*summary.chains[0].ks >= 0.0);
  CHECK(*summary.chains[0].ks <= 1.0);
}

TEST_CASE("run_experiment: reruns are byte-identical and sub-seeds are distinct") {
  TempDir dir_a("exp_repro_a");
  TempDir dir_b("exp_repro_b");
  json doc = json::parse(R"({
    "model": {"name": "gaussian", "mean": [0.0, 0.0],
              "cov": [[1.0, 0.9], [0.9, 1.0]]},
    "kernel": {"name": "mala", "step_size": 0.7},
    "n_steps": 2000, "n_chains": 4, "seed": 999
  })");
  doc["out_dir"] = dir_a.path.string();
  const ExperimentSummary a = run_experiment(parse_config_json(doc));
  doc["out_dir"] = dir_b.path.string();
  const ExperimentSummary b = run_experiment(parse_config_json(doc));

  std::set<std::uint64_t> seeds;
  for (int c = 0; c < 4; ++c) {
    const std::string name = "trace_chain_" + std::to_string(c) + ".csv";
    CHECK(file_bytes((dir_a.path / name).string()) ==
          file_bytes((dir_b.path / name).string()));
    seeds.insert(a.chains[c].seed);
    CHECK(a.chains[c].seed == b.chains[c].seed);
  }
  CHECK(seeds.size() == 4);
}

TEST_CASE("run_experiment: output is independent of the thread cap") {
  TempDir dir_par("exp_threads_par");
  TempDir dir_seq("exp_threads_seq");
  json doc = json::parse(R"({
    "model": {"name": "quartic"},
    "kernel": {"name": "mala", "step_size": 0.5},
    "n_steps": 2000, "n_chains": 3, "seed": 5
  })");
  doc["out_dir"] = dir_par.path.string();
  run_experiment(parse_config_json(doc));

  setenv("MANIFOLD_MCMC_THREADS", "1", 1);
  doc["out_dir"] = dir_seq.path.string();
  run_experiment(parse_config_json(doc));
  unsetenv("MANIFOLD_MCMC_THREADS");

  for (int c = 0; c < 3; ++c) {
    const std::string name = "trace_chain_" + std::to_string(c) + ".csv";
    CHECK(file_bytes((dir_par.path / name).string()) ==
          file_bytes((dir_seq.path / name).string()));
  }
}

TEST_CASE("run_experiment: thinning reduces file rows, not the statistics") {
  TempDir dir_thin("exp_thin");
  TempDir dir_full("exp_full");
  json doc = minimal_config();
  doc["n_steps"] = 3000;
  doc["thinning"] = 10;
  doc["out_dir"] = dir_thin.path.string();
  const ExperimentSummary thin = run_experiment(parse_config_json(doc));

  doc["thinning"] = 1;
  doc["out_dir"] = dir_full.path.string();
  const ExperimentSummary full = run_experiment(parse_config_json(doc));

  const Trace thinned =
      load_trace_csv((dir_thin.path / "trace_chain_0.csv").string());
  CHECK(thinned.length() == 301);  // every 10th state including step 0
  CHECK(thin.chains[0].mean[0] == full.chains[0].mean[0]);
  CHECK(thin.chains[0].ess[0] == full.chains[0].ess[0]);
}

TEST_CASE("trace csv: doubles survive the round trip exactly") {
  Trace t;
  t.diag["dH"] = {0.0};
  t.accepted = {1};
  Eigen::VectorXd s(2);
  s << -0.12345678901234567, 3.9999999999999996;
  t.states.push_back(s);
  Rng rng(5);
  for (int i = 0; i < 50; ++i) {
    Eigen::VectorXd v(2);
    v << rng.normal() * 1e-7, rng.normal() * 1e7;
    t.states.push_back(v);
    t.accepted.push_back(i % 2);
    t.diag["dH"].push_back(rng.normal());
  }
  write_trace_csv(t, "roundtrip.csv", 1);
  const Trace back = load_trace_csv("roundtrip.csv");
  REQUIRE(back.length() == t.length());
  for (std::size_t i = 0; i < t.length(); ++i) {
    CHECK(back.states[i][0] == t.states[i][0]);
    CHECK(back.states[i][1] == t.states[i][1]);
    CHECK(back.diag.at("dH")[i] == t.diag.at("dH")[i]);
  }
  fs::remove("roundtrip.csv");
}

TEST_CASE("overrides: dotted paths and json coercion") {
  json doc = minimal_config();
  apply_override(doc, "kernel.step_size=0.125");
  CHECK(doc["kernel"]["step_size"] == 0.125);
  apply_override(doc, "n_steps=99");
  CHECK(doc["n_steps"] == 99);
  apply_override(doc, "model.name=quartic");
  CHECK(doc["model"]["name"] == "quartic");
  CHECK_THROWS_AS(apply_override(doc, "no_equals_sign"), ValidationError);
}

TEST_CASE("presets: all four recipes exist and validate") {
  const std::vector<std::string> expected = {
      "figure1", "logistic-compare", "noisy-metric-validate",
      "multipotential-demo"};
  for (const std::string& name : expected) {
    const Preset* p = find_preset(name);
    REQUIRE(p != nullptr);
    for (const auto& [variant, doc] : p->variants) {
      CHECK_NOTHROW(parse_config_json(doc));
    }
  }
  CHECK(find_preset("nope") == nullptr);
}

TEST_CASE("run_experiment: chain aborts are recorded without killing siblings") {
  TempDir dir("exp_abort");
  json doc = json::parse(R"({
    "model": {"name": "quartic"},
    "kernel": {"name": "decoupled_langevin", "adjust": false,
               "tau": 3.0, "eta": 2.0},
    "n_steps": 5000, "n_chains": 2, "seed": 12
  })");
  doc["out_dir"] = dir.path.string();
  const ExperimentSummary summary = run_experiment(parse_config_json(doc));
  CHECK(summary.any_aborted());
  int aborted = 0;
  for (const auto& c : summary.chains) aborted += c.aborted;
  CHECK(aborted >= 1);
  // summary file still written
  CHECK(fs::exists(dir.path / "summary.json"));
}
