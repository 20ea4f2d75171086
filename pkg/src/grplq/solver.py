"""Blockwise coordinate descent for l1-lq penalised least squares.

Each sweep visits the groups in index order and minimises the objective over
one block with the others held fixed. A block whose Gram matrix
``G_j = X_j^T X_j / n`` is a multiple of the identity is updated by a single
proximal step; other blocks run proximal-gradient iterations with step
``1 / L_j``, ``L_j`` the largest eigenvalue of ``G_j``. Sweeps stop once the
KKT certificate of :mod:`grplq.certify` is within tolerance.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import optimize

from .certify import kkt_check
from .model import (
    GroupedDesign,
    PenaltySpec,
    format_q,
    group_norm,
    objective,
    parse_q,
    penalty_value,
)
from .prox import prox_lq

__all__ = [
    "BracketError",
    "FitResult",
    "PathResult",
    "SolverOptions",
    "default_lambda_grid",
    "fit",
    "fit_constrained",
    "fit_path",
    "lambda_max",
]

logger = logging.getLogger(__name__)


class BracketError(RuntimeError):
    """The penalty budget could not be bracketed by the lambda search."""


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-8
    max_iter: int = 10000
    inner_tol: float | None = None
    inner_max_iter: int = 1000
    record_objective: bool = False

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be >= 1, got {self.max_iter}")

    @property
    def block_tol(self) -> float:
        return self.tol / 10.0 if self.inner_tol is None else self.inner_tol


@dataclass
class FitResult:
    beta: NDArray[np.float64]
    objective: float
    iterations: int
    converged: bool
    kkt_residual: float
    lam: float
    q: float
    sizes: tuple[int, ...]
    trace: list[float] = field(default_factory=list, repr=False)

    @property
    def active_set(self) -> list[int]:
        starts = np.concatenate([[0], np.cumsum(self.sizes)])
        return [
            j
            for j in range(len(self.sizes))
            if np.any(self.beta[starts[j] : starts[j + 1]] != 0.0)
        ]

    def to_dict(self) -> dict:
        return {
            "beta": [float(b) for b in self.beta],
            "active_set": self.active_set,
            "objective": float(self.objective),
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
            "kkt_residual": float(self.kkt_residual),
            "lambda": float(self.lam),
            "q": format_q(self.q),
        }


@dataclass
class PathResult:
    lambdas: NDArray[np.float64]
    fits: list[FitResult]

    def to_dict(self) -> dict:
        return {
            "lambdas": [float(v) for v in self.lambdas],
            "fits": [f.to_dict() for f in self.fits],
        }


def lambda_max(design: GroupedDesign, y: ArrayLike, q) -> float:
    """Smallest lambda at which ``beta = 0`` is optimal.

    ``max_j ||X_j^T y / n||_{q'} / d_j^{1/q'}``.
    """
    spec = PenaltySpec(q)
    y = np.asarray(y, dtype=float)
    c = design.X.T @ y / design.n
    w = spec.weights(design.sizes)
    qp = spec.q_prime
    return float(max(group_norm(c[sl], qp) / w[j] for j, sl in enumerate(design.slices)))


def default_lambda_grid(
    design: GroupedDesign, y: ArrayLike, q, size: int = 50, min_ratio: float = 1e-3
) -> NDArray[np.float64]:
    top = lambda_max(design, y, q)
    if size == 1:
        return np.array([top])
    return top * np.logspace(0.0, math.log10(min_ratio), size)


def _largest_eigenvalue(G: NDArray[np.float64], tol: float = 1e-10, max_iter: int = 500) -> float:
    d = G.shape[0]
    if d == 1:
        return float(G[0, 0])
    # Irregular deterministic start; avoids being orthogonal to the top
    # eigenvector for the symmetric patterns common in test designs.
    x = 1.0 + np.sqrt(np.arange(1.0, d + 1.0)) % 1.0
    x /= np.linalg.norm(x)
    val = 0.0
    for _ in range(max_iter):
        gx = G @ x
        nrm = np.linalg.norm(gx)
        if nrm == 0.0:
            return 0.0
        new = float(x @ gx)
        x = gx / nrm
        if abs(new - val) <= tol * abs(new):
            val = new
            break
        val = new
    return val


class _Block:
    __slots__ = ("sl", "X", "G", "iso", "L", "t")

    def __init__(self, X: NDArray[np.float64], sl: slice, n: int, t: float):
        self.sl = sl
        self.X = X
        self.G = X.T @ X / n
        self.t = t
        d = self.G.shape[0]
        c = float(np.trace(self.G)) / d
        off = self.G - c * np.eye(d)
        self.iso = c if c > 0 and np.max(np.abs(off)) <= 1e-12 * c else None
        self.L = max(_largest_eigenvalue(self.G), 0.0) * (1.0 + 1e-9)


def _block_value(blk: _Block, b, z, q) -> float:
    return 0.5 * float(b @ blk.G @ b) - float(z @ b) + blk.t * group_norm(b, q)


def _update_block(blk: _Block, b, z, q, qp, tol, max_iter):
    """Minimise ``1/2 b'Gb - z'b + t ||b||_q`` starting from ``b``."""
    if blk.iso is not None:
        return prox_lq(z / blk.iso, blk.t / blk.iso, q)
    if blk.L == 0.0:
        return b
    if not np.any(b != 0.0) and group_norm(z, qp) <= blk.t:
        return b
    L = blk.L
    cur = b
    val = _block_value(blk, cur, z, q)
    for _ in range(max_iter):
        new = prox_lq(cur - (blk.G @ cur - z) / L, blk.t / L, q)
        new_val = _block_value(blk, new, z, q)
        if new_val > val + 1e-14 * max(1.0, abs(val)):
            L *= 2.0
            continue
        step = L * float(np.linalg.norm(new - cur))
        cur, val = new, new_val
        if step <= tol:
            break
    return cur


def fit(
    design: GroupedDesign,
    y: ArrayLike,
    spec: PenaltySpec,
    opts: SolverOptions | None = None,
    warm_start: ArrayLike | None = None,
) -> FitResult:
    """Solve the penalised problem by cyclic block coordinate descent.

    Parameters
    ----------
    design : GroupedDesign
    y : array_like of shape (n,)
    spec : PenaltySpec
    opts : SolverOptions, optional
    warm_start : array_like of shape (m,), optional
        Initial coefficients.

    Returns
    -------
    FitResult
        ``converged`` is False when ``max_iter`` sweeps did not reach the KKT
        tolerance; ``beta`` is then the iterate with the smallest residual.
    """
    opts = opts or SolverOptions()
    y = np.asarray(y, dtype=float)
    if y.shape != (design.n,):
        raise ValueError(f"response has shape {y.shape}, expected ({design.n},)")
    n, q, qp = design.n, spec.q, spec.q_prime
    w = spec.weights(design.sizes)
    blocks = [
        _Block(design.X[:, sl], sl, n, spec.lam * w[j]) for j, sl in enumerate(design.slices)
    ]
    beta = (
        np.zeros(design.m)
        if warm_start is None
        else np.array(design.check_beta(warm_start), dtype=float)
    )
    r = y - design.X @ beta
    trace: list[float] = []
    if opts.record_objective:
        trace.append(objective(design, y, beta, spec))

    cert = kkt_check(design, y, beta, spec, opts.tol)
    best_beta, best_res = beta.copy(), cert.max_residual
    it = 0
    while not cert.optimal and it < opts.max_iter:
        it += 1
        for blk in blocks:
            b = beta[blk.sl]
            z = blk.X.T @ r / n + blk.G @ b
            new = _update_block(blk, b, z, q, qp, opts.block_tol, opts.inner_max_iter)
            delta = new - b
            if np.any(delta != 0.0):
                r -= blk.X @ delta
                beta[blk.sl] = new
            if opts.record_objective:
                trace.append(objective(design, y, beta, spec))
        r = y - design.X @ beta
        cert = kkt_check(design, y, beta, spec, opts.tol)
        if cert.max_residual < best_res:
            best_beta, best_res = beta.copy(), cert.max_residual

    if not cert.optimal:
        logger.warning(
            "coordinate descent stopped after %d sweeps with KKT residual %.3e", it, best_res
        )
        beta = best_beta
    return FitResult(
        beta=beta,
        objective=objective(design, y, beta, spec),
        iterations=it,
        converged=cert.optimal,
        kkt_residual=min(best_res, cert.max_residual),
        lam=spec.lam,
        q=q,
        sizes=design.sizes,
        trace=trace,
    )


def fit_path(
    design: GroupedDesign,
    y: ArrayLike,
    q,
    lambdas: Sequence[float] | None = None,
    opts: SolverOptions | None = None,
    grid_size: int = 50,
    min_ratio: float = 1e-3,
) -> PathResult:
    """Warm-started fits along a strictly decreasing lambda grid.

    Without ``lambdas`` the grid has ``grid_size`` log-spaced points from
    ``lambda_max`` down to ``min_ratio * lambda_max``.
    """
    q = parse_q(q)
    grid = (
        default_lambda_grid(design, y, q, grid_size, min_ratio)
        if lambdas is None
        else np.asarray(lambdas, dtype=float)
    )
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("lambda grid must be a nonempty 1-d sequence")
    if np.any(np.diff(grid) >= 0):
        raise ValueError("lambda grid must be strictly decreasing")
    fits = []
    warm = None
    for lam in grid:
        res = fit(design, y, PenaltySpec(q, lam), opts, warm_start=warm)
        fits.append(res)
        warm = res.beta
    return PathResult(grid, fits)


_WALK_DECADES = 6


def _ols(design, y, q, opts) -> FitResult | None:
    """The lambda = 0 end of the path when least squares has a unique solution."""
    if design.n < design.m or np.linalg.matrix_rank(design.X) < design.m:
        return None
    spec0 = PenaltySpec(q, 0.0)
    beta, *_ = np.linalg.lstsq(design.X, y, rcond=None)
    cert = kkt_check(design, y, beta, spec0, opts.tol)
    return FitResult(
        beta, objective(design, y, beta, spec0), 0, cert.optimal, cert.max_residual,
        0.0, q, design.sizes,
    )


def fit_constrained(
    design: GroupedDesign,
    y: ArrayLike,
    q,
    budget: float,
    opts: SolverOptions | None = None,
    rtol: float = 1e-6,
    max_bisect: int = 200,
) -> FitResult:
    """Least squares subject to ``sum_j d_j^{1/q'} ||beta_j||_q <= budget``.

    The constrained minimiser is a penalised solution for some lambda, found
    by a bracketed root search in ``log lambda`` on the nonincreasing penalty
    of the path. If least squares is unique and already within budget it is
    returned; without a unique least-squares end, the path is followed down
    to ``1e-6 * lambda_max`` and its end is returned if still within budget.
    The returned ``FitResult`` carries the lambda used.

    Raises
    ------
    BracketError
        If no lambda brings the penalty within ``rtol`` of the budget.
    """
    if not budget > 0:
        raise ValueError(f"budget must be positive, got {budget}")
    opts = opts or SolverOptions()
    q = parse_q(q)
    y = np.asarray(y, dtype=float)
    spec = PenaltySpec(q)
    # Penalty precision tracks the KKT tolerance; keep it below rtol * budget.
    opts = replace(opts, tol=min(opts.tol, max(0.1 * rtol * budget, 1e-14)))
    hi = lambda_max(design, y, q)
    known: dict[float, float] = {}
    state = {"warm": None, "best": None}

    class _Hit(Exception):
        pass

    def record(res: FitResult) -> float:
        pen = penalty_value(res.beta, spec, design)
        state["warm"], state["best"] = res.beta, res
        if abs(pen - budget) <= rtol * budget:
            raise _Hit
        return (pen - budget) / budget

    def gap(log_lam):
        if log_lam in known:
            return known[log_lam]
        return record(fit(design, y, PenaltySpec(q, math.exp(log_lam)), opts, warm_start=state["warm"]))

    try:
        ols = _ols(design, y, q, opts)
        if ols is not None:
            pen_low = penalty_value(ols.beta, spec, design)
            if pen_low <= budget * (1.0 + rtol):
                return ols
            if hi == 0.0:
                raise BracketError(f"zero response; achievable penalty range is [0, {pen_low}]")
            log_lo = math.log(hi * 1e-12)
            known[log_lo] = (pen_low - budget) / budget
        else:
            if hi == 0.0:
                raise BracketError("zero response; achievable penalty range is [0, 0]")
            # Walk down the path until the penalty exceeds the budget.
            log_lo = None
            for k in range(1, _WALK_DECADES + 1):
                log_lam = math.log(hi) - k * math.log(10.0)
                val = gap(log_lam)
                known[log_lam] = val
                if val > 0:
                    log_lo = log_lam
                    break
                hi = math.exp(log_lam)
            if log_lo is None:
                return state["best"]
        log_hi = math.log(hi)
        known.setdefault(log_hi, -1.0)
        optimize.brentq(gap, log_lo, log_hi, xtol=1e-15, maxiter=max_bisect)
    except _Hit:
        return state["best"]
    except RuntimeError:
        pass
    best = state["best"]
    pen = penalty_value(best.beta, spec, design) if best is not None else float("nan")
    raise BracketError(
        f"penalty budget {budget} not matched within rtol={rtol}: "
        f"achieved {pen} at lambda={best.lam if best is not None else float('nan')}"
    )
