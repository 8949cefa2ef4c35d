"""Numerical scheme for backward doubly stochastic differential equations.

The package couples an Euler forward diffusion with a backward induction
whose conditional expectations come from a pluggable provider (Gauss-Hermite
quadrature, nested Monte Carlo or least-squares regression), and ships the
convergence, regularity and regression studies that check its rates.
"""

from .backward import BackwardGrid, backward_sweep
from .condexp import (
    CondExpProvider,
    CondExpRequest,
    NestedMCProvider,
    QuadratureProvider,
    RegressionProvider,
    make_provider,
    nested_mc_cond_exp,
    quadrature_cond_exp,
)
from .convergence import ConvergenceReport, run_convergence
from .diagnostics import l2_regularity_stat, y_modulus_stat, ztilde
from .errors import (
    BDSDEError,
    InvalidArgumentError,
    InvalidInputError,
    MeshTooCoarseError,
    NoConvergenceError,
    NumericOverflowError,
    OutOfDomainError,
    ResourceLimitError,
    UnsupportedDimensionError,
)
from .forward import ForwardEnsemble, euler_step, forward_strong_error, simulate_forward
from .lsmc import bootstrap_y0, perturbation_study, regression_error_probe, regression_sweep
from .noise import NoiseGrid, brownian_bridge_refine, coarsen, load_noise, sample_noise
from .presets import PRESETS, get_preset
from .problem import (
    CoefficientSet,
    Partition,
    ProblemSpec,
    TerminalCondition,
    make_uniform_partition,
    validate_assumptions,
)
from .regression import RegressionSpec, lsmc_fit, truncate, truncation_ledger
from .rng import BACKEND

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "BDSDEError",
    "BackwardGrid",
    "CoefficientSet",
    "CondExpProvider",
    "CondExpRequest",
    "ConvergenceReport",
    "ForwardEnsemble",
    "InvalidArgumentError",
    "InvalidInputError",
    "MeshTooCoarseError",
    "NestedMCProvider",
    "NoConvergenceError",
    "NoiseGrid",
    "NumericOverflowError",
    "OutOfDomainError",
    "PRESETS",
    "Partition",
    "ProblemSpec",
    "QuadratureProvider",
    "RegressionProvider",
    "RegressionSpec",
    "ResourceLimitError",
    "TerminalCondition",
    "UnsupportedDimensionError",
    "backward_sweep",
    "bootstrap_y0",
    "brownian_bridge_refine",
    "coarsen",
    "euler_step",
    "forward_strong_error",
    "get_preset",
    "l2_regularity_stat",
    "load_noise",
    "lsmc_fit",
    "make_provider",
    "make_uniform_partition",
    "nested_mc_cond_exp",
    "perturbation_study",
    "quadrature_cond_exp",
    "regression_error_probe",
    "regression_sweep",
    "run_convergence",
    "sample_noise",
    "simulate_forward",
    "truncate",
    "truncation_ledger",
    "validate_assumptions",
    "y_modulus_stat",
    "ztilde",
]
