"""Optimality certificates and the reduction to a compact solution.

A coefficient vector is optimal iff for every group the correlation
``c_j = X_j^T (y - X beta) / n`` equals ``lam * w_j * g_j`` for some
subgradient ``g_j`` of ``||.||_q`` at ``beta_j``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .model import GroupedDesign, PenaltySpec, active_set, group_norm
from .prox import subgradient_residual

__all__ = ["KktCertificate", "NotOptimalError", "kkt_check", "reduce_to_compact"]


class NotOptimalError(ValueError):
    """Raised when an operation requires a KKT-optimal input and does not get one."""


@dataclass(frozen=True)
class KktCertificate:
    per_group_residual: NDArray[np.float64]
    max_residual: float
    optimal: bool
    tol: float
    lam: float

    def to_dict(self) -> dict:
        return {
            "per_group_residual": [float(x) for x in self.per_group_residual],
            "max_residual": float(self.max_residual),
            "optimal": bool(self.optimal),
            "tol": float(self.tol),
            "lambda": float(self.lam),
        }


def kkt_check(
    design: GroupedDesign,
    y: ArrayLike,
    beta: ArrayLike,
    spec: PenaltySpec,
    tol: float,
) -> KktCertificate:
    """Certify ``beta`` against the block optimality conditions at tolerance ``tol``.

    Per group, with ``c_j = X_j^T (y - X beta) / n`` and ``t_j = lam * w_j``:

    * ``beta_j = 0``: ``max(0, ||c_j||_{q'} - t_j)``;
    * otherwise ``t_j * subgradient_residual(beta_j, c_j / t_j, q)``.

    With ``lam = 0`` this degenerates to the gradient check ``||c_j||_inf``.
    """
    y = np.asarray(y, dtype=float)
    beta = design.check_beta(beta)
    c = design.X.T @ (y - design.X @ beta) / design.n
    res = np.zeros(design.p)
    weights = spec.weights(design.sizes)
    qp = spec.q_prime
    for j, sl in enumerate(design.slices):
        cj, bj = c[sl], beta[sl]
        if spec.lam == 0.0:
            res[j] = np.max(np.abs(cj))
            continue
        t = spec.lam * weights[j]
        if not np.any(bj != 0.0):
            res[j] = max(0.0, group_norm(cj, qp) - t)
        else:
            res[j] = t * subgradient_residual(bj, cj / t, spec.q)
    worst = float(res.max()) if res.size else 0.0
    return KktCertificate(res, worst, worst <= tol, float(tol), spec.lam)


def _null_direction(U: NDArray[np.float64], rel_tol: float = 1e-10):
    """A unit vector ``a`` with ``U a ~ 0``, or None when ``U`` has full column rank."""
    n, s = U.shape
    _, sv, vt = np.linalg.svd(U, full_matrices=True)
    if sv.size == 0 or sv[0] == 0.0:
        return vt[-1]
    rank = int(np.sum(sv > rel_tol * sv[0]))
    if rank >= s:
        return None
    return vt[-1]


def reduce_to_compact(
    design: GroupedDesign,
    y: ArrayLike,
    beta: ArrayLike,
    spec: PenaltySpec,
    tol: float,
) -> NDArray[np.float64]:
    """Return an optimal solution with at most ``n`` active groups.

    While more than ``n`` groups are active, the fitted blocks ``u_j = X_j beta_j``
    are linearly dependent. Along a null vector ``a`` of ``[u_j]`` the blocks are
    rescaled by ``1 + t a_j``, which leaves ``X beta`` unchanged; ``t`` is the
    largest step keeping every multiplier nonnegative, so one group drops out
    and no block changes direction. Since every block keeps its subgradient, the
    result stays optimal.

    Raises
    ------
    NotOptimalError
        If ``beta`` does not certify at ``tol``.
    """
    beta = np.array(design.check_beta(beta), dtype=float)
    cert = kkt_check(design, y, beta, spec, tol)
    if not cert.optimal:
        raise NotOptimalError(
            f"input is not KKT-optimal at tol={tol:g} (max residual {cert.max_residual:.3e})"
        )
    weights = spec.weights(design.sizes)
    slices = design.slices
    while True:
        act = active_set(design, beta)
        if len(act) <= design.n:
            return beta
        U = np.column_stack([design.block(j) @ beta[slices[j]] for j in act])
        a = _null_direction(U)
        if a is None or np.linalg.norm(U @ a) > 1e-10 * max(np.linalg.norm(U), 1.0):
            warnings.warn(
                "rank decision for the fitted blocks is ambiguous; returning input unchanged",
                RuntimeWarning,
                stacklevel=2,
            )
            return beta
        # Orient a so the penalty does not grow along the step.
        norms = np.array([group_norm(beta[slices[j]], spec.q) for j in act])
        if float(a @ (weights[act] * norms)) > 0.0 or not np.any(a < 0):
            a = -a
        if not np.any(a < 0):
            return beta
        neg = a < 0
        ratios = np.full(a.shape, np.inf)
        ratios[neg] = 1.0 / -a[neg]
        k = int(np.argmin(ratios))
        step = ratios[k]
        for i, j in enumerate(act):
            factor = 0.0 if i == k else max(0.0, 1.0 + step * a[i])
            beta[slices[j]] *= factor
