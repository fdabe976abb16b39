#pragma once

#include <stdexcept>
#include <string>

namespace manifold_mcmc {

/// Base class for every error raised by the library.
struct McmcError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Cholesky factorization hit a nonpositive pivot. Carries the row index so
/// callers can tell which direction went bad. Kernels turn this into a
/// proposal rejection for sampled metrics; for analytic metrics it indicates
/// a model bug and is allowed to escape.
struct NotPositiveDefinite : McmcError {
  int pivot_row;
  explicit NotPositiveDefinite(int row)
      : McmcError("matrix not positive-definite: nonpositive pivot at row " +
                  std::to_string(row)),
        pivot_row(row) {}
};

struct NotSymmetric : McmcError {
  explicit NotSymmetric(double asymmetry)
      : McmcError("matrix asymmetry " + std::to_string(asymmetry) +
                  " exceeds tolerance 1e-12") {}
};

struct DimensionMismatch : McmcError {
  using McmcError::McmcError;
};

struct InvalidDof : McmcError {
  explicit InvalidDof(double dof, int dim)
      : McmcError("Wishart dof " + std::to_string(dof) +
                  " must exceed dim-1 = " + std::to_string(dim - 1)) {}
};

/// A position or momentum coordinate became inf/nan during a proposal.
struct NonFiniteState : McmcError {
  using McmcError::McmcError;
};

struct FixedPointDiverged : McmcError {
  int iterations;
  explicit FixedPointDiverged(int iters)
      : McmcError("fixed-point iteration failed to converge after " +
                  std::to_string(iters) + " iterations"),
        iterations(iters) {}
};

struct TraceTooShort : McmcError {
  using McmcError::McmcError;
};

struct MissingSeries : McmcError {
  explicit MissingSeries(const std::string& name)
      : McmcError("trace has no diagnostic series named '" + name + "'") {}
};

struct NonIntegrable : McmcError {
  using McmcError::McmcError;
};

struct ParseError : McmcError {
  using McmcError::McmcError;
};

struct ValidationError : McmcError {
  std::string field;
  ValidationError(const std::string& field_, const std::string& reason)
      : McmcError("invalid config field '" + field_ + "': " + reason),
        field(field_) {}
};

/// The selected kernel needs a capability the model does not expose.
struct CapabilityError : McmcError {
  using McmcError::McmcError;
};

/// An unadjusted chain produced a non-finite state and cannot continue.
struct ChainAbort : McmcError {
  long step;
  ChainAbort(long step_, const std::string& what)
      : McmcError("chain aborted at step " + std::to_string(step_) + ": " +
                  what),
        step(step_) {}
};

}  // namespace manifold_mcmc
