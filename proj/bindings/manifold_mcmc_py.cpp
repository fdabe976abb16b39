// Python module exposing the main operations: target construction, chain
// running, and diagnostics.
#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "manifold_mcmc/diagnostics.hpp"
#include "manifold_mcmc/quadrature.hpp"
#include "manifold_mcmc/samplers.hpp"
#include "manifold_mcmc/targets.hpp"
#include "manifold_mcmc/verification.hpp"

namespace py = pybind11;
using namespace manifold_mcmc;

namespace {

SamplerConfig config_from_kwargs(const std::string& kernel,
                                 const py::kwargs& kwargs) {
  SamplerConfig cfg;
  cfg.kernel = kernel_from_name(kernel);
  for (const auto& item : kwargs) {
    const std::string key = py::cast<std::string>(item.first);
    if (key == "step_size") cfg.step_size = py::cast<double>(item.second);
    else if (key == "eta") cfg.eta = py::cast<double>(item.second);
    else if (key == "tau") cfg.tau = py::cast<double>(item.second);
    else if (key == "adjust") cfg.adjust = py::cast<bool>(item.second);
    else if (key == "n_leapfrog") cfg.n_leapfrog = py::cast<int>(item.second);
    else if (key == "n_metrics") cfg.n_metrics = py::cast<int>(item.second);
    else if (key == "adapt_window") cfg.adapt_window = py::cast<int>(item.second);
    else if (key == "memory") cfg.memory = py::cast<int>(item.second);
    else if (key == "gamma_min") cfg.gamma_min = py::cast<double>(item.second);
    else if (key == "fp_tol") cfg.fp_tol = py::cast<double>(item.second);
    else if (key == "fp_max_iters") cfg.fp_max_iters = py::cast<int>(item.second);
    else throw ValidationError(key, "unknown sampler option");
  }
  cfg.validate();
  return cfg;
}

py::dict trace_to_dict(const Trace& trace) {
  const int d = trace.dim();
  const py::ssize_t n = static_cast<py::ssize_t>(trace.length());
  py::array_t<double> states({n, static_cast<py::ssize_t>(d)});
  auto s = states.mutable_unchecked<2>();
  for (py::ssize_t t = 0; t < n; ++t) {
    for (int c = 0; c < d; ++c) s(t, c) = trace.states[t][c];
  }
  py::array_t<bool> accepted(n);
  auto a = accepted.mutable_unchecked<1>();
  for (py::ssize_t t = 0; t < n; ++t) a(t) = trace.accepted[t] != 0;

  py::dict diag;
  for (const auto& [name, series] : trace.diag) {
    diag[py::str(name)] = py::array_t<double>(
        static_cast<py::ssize_t>(series.size()), series.data());
  }
  py::dict out;
  out["states"] = states;
  out["accepted"] = accepted;
  out["diagnostics"] = diag;
  out["seed"] = trace.seed;
  out["fingerprint"] = trace.fingerprint;
  py::dict notes;
  for (const auto& [k, v] : trace.notes) notes[py::str(k)] = v;
  out["notes"] = notes;
  return out;
}

Trace trace_from_states(const Eigen::MatrixXd& states) {
  Trace t;
  for (Eigen::Index i = 0; i < states.rows(); ++i) {
    t.states.push_back(states.row(i).transpose());
    t.accepted.push_back(1);
  }
  return t;
}

}  // namespace

PYBIND11_MODULE(_manifold_mcmc, m) {
  m.doc() = "Geometry-aware MCMC kernels: manifold Langevin and Hamiltonian "
            "samplers with extended-space and quasi-Newton variants";

  py::register_exception<McmcError>(m, "McmcError", PyExc_RuntimeError);

  py::class_<TargetModel>(m, "TargetModel")
      .def_readonly("name", &TargetModel::name)
      .def_readonly("dim", &TargetModel::dim)
      .def("log_density",
           [](const TargetModel& t, const Eigen::VectorXd& x) {
             return t.log_density(x);
           })
      .def("grad_log_density",
           [](const TargetModel& t, const Eigen::VectorXd& x) {
             return t.grad_log_density(x);
           })
      .def("metric",
           [](const TargetModel& t, const Eigen::VectorXd& x) {
             if (!t.has_metric()) throw CapabilityError("model has no metric");
             return Eigen::MatrixXd(t.metric(x).matrix());
           })
      .def("cdf",
           [](const TargetModel& t, double x) {
             if (!t.cdf_1d) throw CapabilityError("model has no reference CDF");
             return t.cdf_1d(x);
           });

  m.def("gaussian", &make_gaussian, py::arg("mean"), py::arg("cov"));
  m.def("quartic", &make_quartic);
  m.def(
      "logistic_synthetic",
      [](int dim, int n, std::uint64_t seed, double prior_variance) {
        return make_logistic(
            make_logistic_synthetic(dim, n, seed, prior_variance));
      },
      py::arg("dim"), py::arg("n"), py::arg("seed"),
      py::arg("prior_variance") = 100.0);
  m.def(
      "logistic_csv",
      [](const std::string& path, double prior_variance) {
        return make_logistic(load_logistic_csv(path, prior_variance));
      },
      py::arg("path"), py::arg("prior_variance") = 100.0);
  m.def("wrap_noisy_metric", &wrap_noisy_metric, py::arg("model"),
        py::arg("dof"));
  m.def("wrap_exact_metric", &wrap_exact_metric, py::arg("model"));

  m.def(
      "run_chain",
      [](const TargetModel& model, const std::string& kernel,
         const Eigen::VectorXd& initial, long n_steps, std::uint64_t seed,
         const py::kwargs& kwargs) {
        const SamplerConfig cfg = config_from_kwargs(kernel, kwargs);
        return trace_to_dict(run_chain(initial, cfg, model, n_steps, seed));
      },
      py::arg("model"), py::arg("kernel"), py::arg("initial"),
      py::arg("n_steps"), py::arg("seed"),
      "Run one chain; extra keyword arguments set sampler options "
      "(step_size, eta, tau, adjust, n_leapfrog, n_metrics, adapt_window, "
      "memory, gamma_min, fp_tol, fp_max_iters).");

  m.def(
      "ess",
      [](const Eigen::MatrixXd& states, int coordinate) {
        return ess(trace_from_states(states), coordinate);
      },
      py::arg("states"), py::arg("coordinate") = 0);
  m.def(
      "moments",
      [](const Eigen::MatrixXd& states, double burn_in) {
        const Moments mo = moments(trace_from_states(states), burn_in);
        py::dict out;
        out["mean"] = mo.mean;
        out["covariance"] = mo.covariance;
        out["mcse"] = mo.mcse;
        return out;
      },
      py::arg("states"), py::arg("burn_in") = 0.25);
  m.def(
      "ks_statistic_1d",
      [](const Eigen::MatrixXd& states, const std::function<double(double)>& cdf,
         double burn_in) {
        return ks_statistic_1d(trace_from_states(states), cdf, burn_in);
      },
      py::arg("states"), py::arg("cdf"), py::arg("burn_in") = 0.25);

  m.def(
      "quadrature_summary_1d",
      [](const std::function<double(double)>& log_density, int order) {
        const DensitySummary s = summarize_density_1d(log_density, order);
        py::dict out;
        out["normalizer"] = s.normalizer;
        out["mean"] = s.mean;
        out["variance"] = s.variance;
        return out;
      },
      py::arg("log_density"), py::arg("order") = 64);
}
