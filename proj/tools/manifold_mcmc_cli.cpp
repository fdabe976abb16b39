// Batch experiment runner: parse a config (or preset), run seeded chains and
// emit CSV traces plus a JSON summary.
//
// Exit codes: 0 success, 1 validation/parse error, 2 chain abort.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "manifold_mcmc/experiment.hpp"

namespace fs = std::filesystem;
using manifold_mcmc::ExperimentConfig;
using manifold_mcmc::ExperimentSummary;
using nlohmann::json;

namespace {

json load_config_doc(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw manifold_mcmc::ParseError("cannot open config file: " + path);
  }
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw manifold_mcmc::ParseError("config " + path + ": " + e.what());
  }
}

/// Resolves a `run`/`check` argument to (variant name, config doc) pairs:
/// either a built-in preset or a config file path.
std::vector<std::pair<std::string, json>> resolve(
    const std::string& target, const std::vector<std::string>& overrides) {
  std::vector<std::pair<std::string, json>> docs;
  if (const manifold_mcmc::Preset* preset = manifold_mcmc::find_preset(target)) {
    docs = preset->variants;
  } else {
    docs.emplace_back("", load_config_doc(target));
  }
  for (auto& [name, doc] : docs) {
    for (const std::string& assignment : overrides) {
      manifold_mcmc::apply_override(doc, assignment);
    }
  }
  return docs;
}

int run_target(const std::string& target, const std::string& out_dir,
               const std::vector<std::string>& overrides, bool check_only) {
  const auto docs = resolve(target, overrides);
  bool aborted = false;
  json preset_summary = json::array();

  for (const auto& [variant, doc] : docs) {
    ExperimentConfig cfg = manifold_mcmc::parse_config_json(doc);
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (!variant.empty()) cfg.out_dir += "/" + variant;

    if (check_only) {
      std::cout << "ok: " << (variant.empty() ? target : variant)
                << " (model valid, kernel capabilities satisfied)\n";
      continue;
    }

    const ExperimentSummary summary = manifold_mcmc::run_experiment(cfg);
    aborted = aborted || summary.any_aborted();
    std::cout << "wrote " << cfg.out_dir << "/summary.json";
    if (!variant.empty()) std::cout << "  [" << variant << "]";
    std::cout << "\n";
    for (const auto& chain : summary.chains) {
      std::cout << "  chain " << chain.chain;
      if (chain.aborted) {
        std::cout << " ABORTED: " << chain.abort_message << "\n";
        continue;
      }
      std::cout << " acc=" << chain.acceptance_rate;
      if (chain.ks) std::cout << " ks=" << *chain.ks;
      std::cout << "\n";
    }
    if (!variant.empty()) {
      json entry;
      entry["variant"] = variant;
      entry["summary"] = summary.to_json();
      preset_summary.push_back(std::move(entry));
    }
  }

  if (!check_only && docs.size() > 1) {
    const std::string dir = out_dir.empty() ? "runs" : out_dir;
    fs::create_directories(dir);
    std::ofstream out(dir + "/preset_summary.json");
    out << preset_summary.dump(2) << "\n";
    std::cout << "wrote " << dir << "/preset_summary.json\n";
  }
  return aborted ? 2 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"manifold-mcmc: geometry-aware MCMC experiment runner"};
  app.require_subcommand(1);

  std::string target;
  std::string out_dir;
  std::vector<std::string> overrides;

  CLI::App* run = app.add_subcommand("run", "run a config file or preset");
  run->add_option("config", target, "config path or preset name")->required();
  run->add_option("--out", out_dir, "output directory");
  run->add_option("--override", overrides,
                  "override a config value, e.g. kernel.step_size=0.2");

  CLI::App* check =
      app.add_subcommand("check", "validate a config without running");
  check->add_option("config", target, "config path or preset name")->required();
  check->add_option("--override", overrides, "override a config value");

  std::string dump_name;
  CLI::App* list = app.add_subcommand("presets", "list built-in recipes");
  list->add_option("--dump", dump_name, "print a preset's config documents");

  CLI11_PARSE(app, argc, argv);

  try {
    if (list->parsed()) {
      if (!dump_name.empty()) {
        const manifold_mcmc::Preset* p = manifold_mcmc::find_preset(dump_name);
        if (!p) {
          std::cerr << "unknown preset: " << dump_name << "\n";
          return 1;
        }
        json doc = json::array();
        for (const auto& [variant, cfg] : p->variants) {
          doc.push_back({{"variant", variant}, {"config", cfg}});
        }
        std::cout << doc.dump(2) << "\n";
        return 0;
      }
      for (const auto& p : manifold_mcmc::presets()) {
        std::cout << p.name << "\n    " << p.description << "\n";
      }
      return 0;
    }
    return run_target(target, out_dir, overrides, check->parsed());
  } catch (const manifold_mcmc::McmcError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
