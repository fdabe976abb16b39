#include "manifold_mcmc/verification.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "manifold_mcmc/diagnostics.hpp"
#include "manifold_mcmc/samplers.hpp"

namespace manifold_mcmc {

namespace fs = std::filesystem;
using nlohmann::json;

OracleCache::OracleCache(std::string dir) : dir_(std::move(dir)) {
  if (dir_.empty()) {
    if (const char* env = std::getenv("MANIFOLD_MCMC_ORACLE_CACHE")) {
      dir_ = env;
    } else {
      dir_ = "oracle_cache";
    }
  }
  fs::create_directories(dir_);
}

std::optional<std::string> OracleCache::load(
    const std::string& name, const std::string& fingerprint) const {
  const fs::path path = fs::path(dir_) / (name + ".json");
  std::ifstream in(path);
  if (!in) return std::nullopt;
  try {
    json record = json::parse(in);
    if (record.at("fingerprint").get<std::string>() != fingerprint) {
      return std::nullopt;
    }
    return record.at("payload").dump();
  } catch (const json::exception&) {
    return std::nullopt;
  }
}

void OracleCache::store(const std::string& name, const std::string& fingerprint,
                        const std::string& provenance,
                        const std::string& payload) const {
  json record;
  record["name"] = name;
  record["fingerprint"] = fingerprint;
  record["provenance"] = provenance;
  record["payload"] = json::parse(payload);

  const fs::path path = fs::path(dir_) / (name + ".json");
  const fs::path tmp = fs::path(dir_) / (name + ".json.tmp");
  {
    std::ofstream out(tmp);
    out << record.dump(2) << "\n";
  }
  fs::rename(tmp, path);  // atomic publish
}

DensitySummary quadrature_moments(
    const std::function<double(double)>& log_density, int order,
    const std::string& cache_key, const OracleCache* cache) {
  const std::string fingerprint = "order=" + std::to_string(order);
  if (cache && !cache_key.empty()) {
    if (auto hit = cache->load(cache_key, fingerprint)) {
      json payload = json::parse(*hit);
      DensitySummary s;
      s.normalizer = payload.at("normalizer").get<double>();
      s.mean = payload.at("mean").get<double>();
      s.variance = payload.at("variance").get<double>();
      s.lo = payload.at("lo").get<double>();
      s.hi = payload.at("hi").get<double>();
      s.cdf_grid = payload.at("cdf_grid").get<std::vector<double>>();
      return s;
    }
  }
  DensitySummary s = summarize_density_1d(log_density, order);
  if (cache && !cache_key.empty()) {
    json payload;
    payload["normalizer"] = s.normalizer;
    payload["mean"] = s.mean;
    payload["variance"] = s.variance;
    payload["lo"] = s.lo;
    payload["hi"] = s.hi;
    payload["cdf_grid"] = s.cdf_grid;
    cache->store(cache_key, fingerprint,
                 "adaptive composite Gauss-Legendre quadrature on [-8,8]",
                 payload.dump());
  }
  return s;
}

double finite_difference_check(
    const std::function<double(const Eigen::VectorXd&)>& f,
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& grad_f,
    const std::vector<Eigen::VectorXd>& points, double h) {
  double worst = 0.0;
  for (const Eigen::VectorXd& point : points) {
    const Eigen::VectorXd g = grad_f(point);
    const double scale = std::max(1.0, g.lpNorm<Eigen::Infinity>());
    Eigen::VectorXd x = point;
    for (int i = 0; i < point.size(); ++i) {
      const double save = x[i];
      x[i] = save + h;
      const double fp = f(x);
      x[i] = save - h;
      const double fm = f(x);
      x[i] = save;
      const double fd = (fp - fm) / (2.0 * h);
      worst = std::max(worst, std::abs(fd - g[i]) / scale);
    }
  }
  return worst;
}

double metric_derivs_fd_check(const TargetModel& model,
                              const std::vector<Eigen::VectorXd>& points,
                              double h) {
  double worst = 0.0;
  for (const Eigen::VectorXd& point : points) {
    const std::vector<Eigen::MatrixXd> dg = model.metric_derivs(point);
    Eigen::VectorXd x = point;
    for (int j = 0; j < point.size(); ++j) {
      const double save = x[j];
      x[j] = save + h;
      const Eigen::MatrixXd gp = model.metric(x).matrix();
      x[j] = save - h;
      const Eigen::MatrixXd gm = model.metric(x).matrix();
      x[j] = save;
      const Eigen::MatrixXd fd = (gp - gm) / (2.0 * h);
      worst = std::max(worst, (fd - dg[j]).cwiseAbs().maxCoeff());
    }
  }
  return worst;
}

RejectionSample rejection_sampler_quartic(long n, Rng& rng) {
  const double envelope_sd = 0.75;
  // sup over x of exp(-x^4) / exp(-x^2 / (2 sd^2)) is attained where
  // 4 x^3 = x / sd^2.
  const double x_peak = std::sqrt(1.0 / (4.0 * envelope_sd * envelope_sd));
  const double log_ratio_peak =
      -std::pow(x_peak, 4.0) +
      x_peak * x_peak / (2.0 * envelope_sd * envelope_sd);
  // Predicted acceptance = Z_f / (M * Z_g) with M = sup f/g over normalized g.
  const double z_f =
      integrate([](double x) { return std::exp(-std::pow(x, 4.0)); }, -8.0, 8.0);
  const double z_g = std::sqrt(2.0 * M_PI) * envelope_sd;
  const double m_const = std::exp(log_ratio_peak) * z_g;

  RejectionSample out;
  out.predicted_acceptance_rate = z_f / m_const;
  out.draws.reserve(static_cast<std::size_t>(n));
  long proposals = 0;
  while (static_cast<long>(out.draws.size()) < n) {
    const double x = envelope_sd * rng.normal();
    ++proposals;
    const double log_accept = -std::pow(x, 4.0) +
                              x * x / (2.0 * envelope_sd * envelope_sd) -
                              log_ratio_peak;
    if (std::log(rng.uniform()) < log_accept) {
      out.draws.push_back(x);
    }
  }
  out.acceptance_rate =
      static_cast<double>(n) / static_cast<double>(proposals);
  return out;
}

ReferenceMoments reference_run(const TargetModel& model,
                               const Eigen::VectorXd& initial,
                               double rwm_step_size, long n_steps,
                               std::uint64_t seed,
                               const std::string& cache_key,
                               const OracleCache* cache) {
  const std::string fingerprint =
      "model=" + model.name + ";dim=" + std::to_string(model.dim) +
      ";eps=" + std::to_string(rwm_step_size) +
      ";n=" + std::to_string(n_steps) + ";seed=" + std::to_string(seed);
  if (cache && !cache_key.empty()) {
    if (auto hit = cache->load(cache_key, fingerprint)) {
      json payload = json::parse(*hit);
      ReferenceMoments r;
      r.n_steps = payload.at("n_steps").get<long>();
      const auto mean = payload.at("mean").get<std::vector<double>>();
      r.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), mean.size());
      const auto mcse = payload.at("mcse").get<std::vector<double>>();
      r.mcse = Eigen::Map<const Eigen::VectorXd>(mcse.data(), mcse.size());
      const auto cov = payload.at("covariance").get<std::vector<double>>();
      r.covariance = Eigen::Map<const Eigen::MatrixXd>(
          cov.data(), r.mean.size(), r.mean.size());
      return r;
    }
  }

  SamplerConfig cfg;
  cfg.kernel = KernelId::Rwm;
  cfg.step_size = rwm_step_size;
  const Trace trace = run_chain(initial, cfg, model, n_steps, seed);
  const Moments m = moments(trace, 0.25);

  ReferenceMoments r;
  r.mean = m.mean;
  r.covariance = m.covariance;
  r.mcse = m.mcse;
  r.n_steps = n_steps;

  if (cache && !cache_key.empty()) {
    json payload;
    payload["n_steps"] = r.n_steps;
    payload["mean"] = std::vector<double>(r.mean.data(),
                                          r.mean.data() + r.mean.size());
    payload["mcse"] = std::vector<double>(r.mcse.data(),
                                          r.mcse.data() + r.mcse.size());
    payload["covariance"] = std::vector<double>(
        r.covariance.data(), r.covariance.data() + r.covariance.size());
    cache->store(cache_key, fingerprint,
                 "long random-walk Metropolis reference run, burn-in 0.25",
                 payload.dump());
  }
  return r;
}

}  // namespace manifold_mcmc
