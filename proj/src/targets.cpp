#include "manifold_mcmc/targets.hpp"

#include <cmath>
#include <fstream>
#include <memory>
#include <mutex>
#include <sstream>

#include "manifold_mcmc/quadrature.hpp"

namespace manifold_mcmc {

void TargetModel::check_dim(const Eigen::VectorXd& theta) const {
  if (theta.size() != dim) {
    throw DimensionMismatch("theta has length " + std::to_string(theta.size()) +
                            ", model '" + name + "' expects " +
                            std::to_string(dim));
  }
}

TargetModel make_gaussian(const Eigen::VectorXd& mean,
                          const Eigen::MatrixXd& cov) {
  const int d = static_cast<int>(mean.size());
  MetricTensor sigma(cov);  // throws NotPositiveDefinite on bad cov
  sigma.chol();
  MetricTensor precision(spd_inverse(sigma));

  // Normalized log-density; the constant is irrelevant to every kernel but
  // makes the model usable as an exact reference.
  const double log_norm =
      -0.5 * (d * 1.8378770664093454835606594728112 - precision.logdet());

  TargetModel m;
  m.name = "gaussian";
  m.dim = d;
  m.constant_metric = true;
  m.log_density = [mean, precision, log_norm](const Eigen::VectorXd& theta) {
    const Eigen::VectorXd r = theta - mean;
    return log_norm - 0.5 * r.dot(precision.matrix() * r);
  };
  m.grad_log_density = [mean, precision](const Eigen::VectorXd& theta) {
    return Eigen::VectorXd(-(precision.matrix() * (theta - mean)));
  };
  m.metric = [precision](const Eigen::VectorXd&) { return precision; };
  m.metric_derivs = [d](const Eigen::VectorXd&) {
    return std::vector<Eigen::MatrixXd>(d, Eigen::MatrixXd::Zero(d, d));
  };
  return m;
}

TargetModel make_quartic() {
  TargetModel m;
  m.name = "quartic";
  m.dim = 1;
  m.constant_metric = true;
  m.log_density = [](const Eigen::VectorXd& theta) {
    const double x = theta[0];
    return -(x * x * x * x);
  };
  m.grad_log_density = [](const Eigen::VectorXd& theta) {
    Eigen::VectorXd g(1);
    const double x = theta[0];
    g[0] = -4.0 * x * x * x;
    return g;
  };
  const MetricTensor unit{Eigen::MatrixXd::Identity(1, 1)};
  m.metric = [unit](const Eigen::VectorXd&) { return unit; };
  m.metric_derivs = [](const Eigen::VectorXd&) {
    return std::vector<Eigen::MatrixXd>(1, Eigen::MatrixXd::Zero(1, 1));
  };

  // CDF table built once on first use.
  struct CdfCache {
    std::once_flag once;
    DensitySummary summary;
  };
  auto cache = std::make_shared<CdfCache>();
  m.cdf_1d = [cache](double x) {
    std::call_once(cache->once, [&] {
      cache->summary = summarize_density_1d(
          [](double t) { return -(t * t * t * t); });
    });
    return cache->summary.cdf(x);
  };
  return m;
}

void LogisticRegressionData::validate() const {
  if (X.rows() < 1 || X.cols() < 1) {
    throw DimensionMismatch("logistic data needs n >= 1 and D >= 1");
  }
  if (y.size() != X.rows()) {
    throw DimensionMismatch("label count does not match design rows");
  }
  for (int i = 0; i < y.size(); ++i) {
    if (y[i] != 0.0 && y[i] != 1.0) {
      throw ValidationError("y", "labels must be 0 or 1");
    }
  }
  if (!(prior_variance > 0.0)) {
    throw ValidationError("prior_variance", "must be positive");
  }
}

namespace {

double log1p_exp(double t) {
  // log(1 + e^t), stable on both sides
  return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
}

double logistic_fn(double t) {
  return t > 0.0 ? 1.0 / (1.0 + std::exp(-t))
                 : std::exp(t) / (1.0 + std::exp(t));
}

}  // namespace

TargetModel make_logistic(const LogisticRegressionData& data) {
  data.validate();
  const int d = static_cast<int>(data.X.cols());
  const double alpha = data.prior_variance;
  auto shared = std::make_shared<LogisticRegressionData>(data);

  const auto require_dim = [d](const Eigen::VectorXd& theta) {
    if (theta.size() != d) {
      throw DimensionMismatch("logistic: theta has length " +
                              std::to_string(theta.size()) + ", expected " +
                              std::to_string(d));
    }
  };

  TargetModel m;
  m.name = "logistic";
  m.dim = d;
  m.constant_metric = false;
  m.log_density = [shared, alpha, require_dim](const Eigen::VectorXd& theta) {
    require_dim(theta);
    const Eigen::VectorXd eta = shared->X * theta;
    double ll = 0.0;
    for (int i = 0; i < eta.size(); ++i) {
      ll += shared->y[i] * eta[i] - log1p_exp(eta[i]);
    }
    return ll - theta.squaredNorm() / (2.0 * alpha);
  };
  m.grad_log_density = [shared, alpha,
                        require_dim](const Eigen::VectorXd& theta) {
    require_dim(theta);
    const Eigen::VectorXd eta = shared->X * theta;
    Eigen::VectorXd mu(eta.size());
    for (int i = 0; i < eta.size(); ++i) mu[i] = logistic_fn(eta[i]);
    return Eigen::VectorXd(shared->X.transpose() * (shared->y - mu) -
                           theta / alpha);
  };
  m.metric = [shared, alpha, d, require_dim](const Eigen::VectorXd& theta) {
    require_dim(theta);
    const Eigen::VectorXd eta = shared->X * theta;
    Eigen::VectorXd lambda(eta.size());
    for (int i = 0; i < eta.size(); ++i) {
      const double mu = logistic_fn(eta[i]);
      lambda[i] = mu * (1.0 - mu);
    }
    Eigen::MatrixXd g = shared->X.transpose() * lambda.asDiagonal() * shared->X;
    g += Eigen::MatrixXd::Identity(d, d) / alpha;
    return MetricTensor(0.5 * (g + g.transpose()));
  };
  m.metric_derivs = [shared, d, require_dim](const Eigen::VectorXd& theta) {
    require_dim(theta);
    const Eigen::VectorXd eta = shared->X * theta;
    Eigen::VectorXd lambda(eta.size()), skew(eta.size());
    for (int i = 0; i < eta.size(); ++i) {
      const double mu = logistic_fn(eta[i]);
      lambda[i] = mu * (1.0 - mu);
      skew[i] = 1.0 - 2.0 * mu;
    }
    std::vector<Eigen::MatrixXd> out;
    out.reserve(d);
    for (int j = 0; j < d; ++j) {
      const Eigen::VectorXd w =
          lambda.array() * skew.array() * shared->X.col(j).array();
      Eigen::MatrixXd dg = shared->X.transpose() * w.asDiagonal() * shared->X;
      out.push_back(0.5 * (dg + dg.transpose()));
    }
    return out;
  };
  return m;
}

LogisticRegressionData make_logistic_synthetic(int dim, int n,
                                               std::uint64_t seed,
                                               double prior_variance) {
  Rng rng(seed);
  LogisticRegressionData data;
  data.prior_variance = prior_variance;
  data.X.resize(n, dim);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < dim; ++j) data.X(i, j) = rng.normal();
  }
  Eigen::VectorXd theta_true(dim);
  for (int j = 0; j < dim; ++j) theta_true[j] = rng.normal();
  data.y.resize(n);
  for (int i = 0; i < n; ++i) {
    const double p = logistic_fn(data.X.row(i).dot(theta_true));
    data.y[i] = rng.uniform() < p ? 1.0 : 0.0;
  }
  return data;
}

LogisticRegressionData load_logistic_csv(const std::string& path,
                                         double prior_variance) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open csv file: " + path);

  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty csv file: " + path);
  int n_cols = 1;
  for (char c : line) n_cols += (c == ',');
  if (n_cols < 2) throw ParseError("csv needs at least columns x1,y");
  const int d = n_cols - 1;

  std::vector<std::vector<double>> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw ParseError("csv line " + std::to_string(line_no) +
                         ": cannot parse '" + cell + "'");
      }
    }
    if (static_cast<int>(row.size()) != n_cols) {
      throw ParseError("csv line " + std::to_string(line_no) +
                       ": expected " + std::to_string(n_cols) + " columns");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError("csv has no data rows: " + path);

  LogisticRegressionData data;
  data.prior_variance = prior_variance;
  data.X.resize(static_cast<int>(rows.size()), d);
  data.y.resize(static_cast<int>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (int j = 0; j < d; ++j) data.X(static_cast<int>(i), j) = rows[i][j];
    data.y[static_cast<int>(i)] = rows[i][d];
  }
  data.validate();
  return data;
}

namespace {

/// Lower-triangular Bartlett factor: sqrt(chi2(nu - i)) on the diagonal,
/// standard normals below.
Eigen::MatrixXd bartlett_lower(double nu, int d, Rng& rng) {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(d, d);
  for (int i = 0; i < d; ++i) {
    a(i, i) = std::sqrt(rng.chi_square(nu - i));
    for (int j = 0; j < i; ++j) a(i, j) = rng.normal();
  }
  return a;
}

}  // namespace

TargetModel wrap_noisy_metric(const TargetModel& inner, double wishart_dof) {
  if (!inner.has_metric()) {
    throw CapabilityError("wrap_noisy_metric: inner model has no metric");
  }
  if (!(wishart_dof > inner.dim - 1)) {
    throw InvalidDof(wishart_dof, inner.dim);
  }
  TargetModel m = inner;
  m.name = inner.name + "+noisy_metric";
  const double nu = wishart_dof;
  const bool with_derivs = inner.has_metric_derivs();
  m.sampled_metric_derivs = with_derivs;
  auto metric_fn = inner.metric;
  auto derivs_fn = inner.metric_derivs;
  m.sample_metric = [metric_fn, derivs_fn, nu, with_derivs](
                        const Eigen::VectorXd& theta, Rng& rng) {
    const MetricTensor g = metric_fn(theta);
    const int d = g.dim();
    const Eigen::MatrixXd& L = g.chol();
    const Eigen::MatrixXd A = bartlett_lower(nu, d, rng);
    const Eigen::MatrixXd LA = (L * A) / std::sqrt(nu);
    Eigen::MatrixXd ghat = LA * LA.transpose();
    SampledMetric out{MetricTensor(0.5 * (ghat + ghat.transpose())),
                      std::nullopt};
    if (with_derivs) {
      // Congruence factor F = LA L^{-1}, so Ghat = F G F^T; applied to each
      // dG/dtheta_i.
      const Eigen::MatrixXd F = L.transpose()
                                    .triangularView<Eigen::Upper>()
                                    .solve(LA.transpose())
                                    .transpose();
      std::vector<Eigen::MatrixXd> dg = derivs_fn(theta);
      for (Eigen::MatrixXd& grad_mat : dg) {
        Eigen::MatrixXd pert = F * grad_mat * F.transpose();
        grad_mat = 0.5 * (pert + pert.transpose());
      }
      out.derivs = std::move(dg);
    }
    return out;
  };
  return m;
}

TargetModel wrap_exact_metric(const TargetModel& inner) {
  if (!inner.has_metric()) {
    throw CapabilityError("wrap_exact_metric: inner model has no metric");
  }
  TargetModel m = inner;
  auto metric_fn = inner.metric;
  auto derivs_fn = inner.metric_derivs;
  const bool with_derivs = inner.has_metric_derivs();
  m.sampled_metric_derivs = with_derivs;
  m.sample_metric = [metric_fn, derivs_fn, with_derivs](
                        const Eigen::VectorXd& theta, Rng&) {
    SampledMetric out{metric_fn(theta), std::nullopt};
    if (with_derivs) out.derivs = derivs_fn(theta);
    return out;
  };
  return m;
}

}  // namespace manifold_mcmc
