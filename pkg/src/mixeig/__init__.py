"""Principal eigenvalue of the mixed local/nonlocal operator -Delta + (-Delta)^s + q . grad.

Finite-difference discretization on intervals and boxes with an exterior
Dirichlet condition, inverse power iteration for the principal eigenpair,
quantitative maximum-principle and Hopf-lemma checks, and a Monte Carlo
survival oracle.
"""

__version__ = "0.1.0"

from .grid import DomainSpec, Grid, build_grid, dist_to_boundary  # noqa: E402
from .frac_kernel import FracParams, WeightTable, apply_frac, build_weights, kernel_constant  # noqa: E402
from .operator import DiscreteOperator, DriftField, apply_drift, apply_local, assemble  # noqa: E402
from .solver import SingularOperatorError, SolveReport, continuation_sweep, solve  # noqa: E402
from .eigen import (  # noqa: E402
    EigenConvergenceError, EigenResult, PositivityError, minmax_quotient, principal_eig,
    rayleigh_lambda1, subdominant_eigs,
)
from .properties import (  # noqa: E402
    BarrierConfig, BarrierReport, Verdict, barrier_verify, check_adjoint, check_hopf,
    check_max_principle, check_minmax, drift_benchmark,
)
from .montecarlo import (  # noqa: E402
    InsufficientStatistics, PathParams, SurvivalCurve, simulate_survival, stable_increment,
)
from .convergence import converge, observed_order  # noqa: E402

__all__ = [
    "DomainSpec", "Grid", "build_grid", "dist_to_boundary",
    "FracParams", "WeightTable", "apply_frac", "build_weights", "kernel_constant",
    "DiscreteOperator", "DriftField", "apply_drift", "apply_local", "assemble",
    "SingularOperatorError", "SolveReport", "continuation_sweep", "solve",
    "EigenConvergenceError", "EigenResult", "PositivityError", "minmax_quotient", "principal_eig",
    "rayleigh_lambda1", "subdominant_eigs",
    "BarrierConfig", "BarrierReport", "Verdict", "barrier_verify", "check_adjoint", "check_hopf",
    "check_max_principle", "check_minmax", "drift_benchmark",
    "InsufficientStatistics", "PathParams", "SurvivalCurve", "simulate_survival", "stable_increment",
    "converge", "observed_order",
]
