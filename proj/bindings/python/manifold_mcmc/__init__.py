"""Geometry-aware MCMC kernels.

Manifold Langevin and Hamiltonian samplers with multi-potential,
extended-space (sampled metric) and quasi-Newton preconditioned variants,
plus chain diagnostics.
"""

try:
    from ._manifold_mcmc import (
        McmcError,
        TargetModel,
        ess,
        gaussian,
        ks_statistic_1d,
        logistic_csv,
        logistic_synthetic,
        moments,
        quadrature_summary_1d,
        quartic,
        run_chain,
        wrap_exact_metric,
        wrap_noisy_metric,
    )
except ImportError:  # build-tree layout: extension next to the package dir
    from _manifold_mcmc import (
        McmcError,
        TargetModel,
        ess,
        gaussian,
        ks_statistic_1d,
        logistic_csv,
        logistic_synthetic,
        moments,
        quadrature_summary_1d,
        quartic,
        run_chain,
        wrap_exact_metric,
        wrap_noisy_metric,
    )

__all__ = [
    "McmcError",
    "TargetModel",
    "ess",
    "gaussian",
    "ks_statistic_1d",
    "logistic_csv",
    "logistic_synthetic",
    "moments",
    "quadrature_summary_1d",
    "quartic",
    "run_chain",
    "wrap_exact_metric",
    "wrap_noisy_metric",
]
