"""Group-penalised least squares with l1-lq penalties.

Solver, optimality certificates, design diagnostics and Monte Carlo
harnesses for

    (1/2n) ||y - X beta||^2 + lam * sum_j d_j^{1/q'} ||beta_j||_q .
"""

from .certify import KktCertificate, NotOptimalError, kkt_check, reduce_to_compact
from .model import (
    DesignError,
    GroupedDesign,
    PenaltySpec,
    active_set,
    block_norms,
    conjugate,
    format_q,
    group_norm,
    objective,
    parse_q,
    penalty_value,
    standardize,
)
from .prox import project_ball, prox_lq, soft_threshold, subgradient_residual
from .solver import (
    BracketError,
    FitResult,
    PathResult,
    SolverOptions,
    default_lambda_grid,
    fit,
    fit_constrained,
    fit_path,
    lambda_max,
)

__version__ = "0.1.0"

__all__ = [
    "BracketError",
    "DesignError",
    "FitResult",
    "GroupedDesign",
    "KktCertificate",
    "NotOptimalError",
    "PathResult",
    "PenaltySpec",
    "SolverOptions",
    "__version__",
    "active_set",
    "block_norms",
    "conjugate",
    "default_lambda_grid",
    "fit",
    "fit_constrained",
    "fit_path",
    "format_q",
    "group_norm",
    "kkt_check",
    "lambda_max",
    "objective",
    "parse_q",
    "penalty_value",
    "project_ball",
    "prox_lq",
    "reduce_to_compact",
    "soft_threshold",
    "standardize",
    "subgradient_residual",
]
