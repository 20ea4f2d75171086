"""Projections onto l_p balls, proximal maps of l_q norms, subgradient tests.

The proximal map of ``t * ||.||_q`` is obtained from the Moreau decomposition

    prox(v) = v - P_{t B_{q'}}(v),

where ``B_{q'}`` is the unit ball of the dual norm.
"""

from __future__ import annotations

import math

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import optimize

from .model import conjugate, group_norm

__all__ = [
    "l1_threshold",
    "project_ball",
    "prox_lq",
    "soft_threshold",
    "subgradient_residual",
]

_OUTER_MAX_ITER = 200


def soft_threshold(v: ArrayLike, t: float) -> NDArray[np.float64]:
    v = np.asarray(v, dtype=float)
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def l1_threshold(a: NDArray[np.float64], r: float) -> float:
    """Threshold ``theta`` with ``sum (a_i - theta)_+ = r`` for ``a >= 0``, ``sum a > r``.

    Sort-and-threshold, O(d log d).
    """
    u = np.sort(a)[::-1]
    css = np.cumsum(u) - r
    k = np.arange(1, u.size + 1)
    keep = u - css / k > 0
    keep[0] = True  # exact arithmetic always keeps the largest entry
    rho = np.flatnonzero(keep)[-1]
    return float(css[rho] / (rho + 1))


def _solve_scaled(a, tau, p):
    """Solve ``exp(-tau) w + w^(p-1) = a`` for each ``a_i >= 0``.

    This is the coordinate condition ``u + mu p u^(p-1) = a`` of the
    projection after the substitution ``mu p = exp((p-1) tau)``,
    ``u = exp(-tau) w``, which keeps every term of order ``a`` whatever the
    size of the multiplier. The equation is made convex and increasing in the
    unknown (``w`` itself for ``p >= 2``, ``y = w^(p-1)`` for ``p < 2``) so Newton
    started above the root decreases monotonically to it.
    """
    e = math.exp(-tau)
    if p >= 2.0:
        w = np.minimum(a * math.exp(min(tau, 700.0)), a ** (1.0 / (p - 1.0)))
        for _ in range(100):
            f = e * w + w ** (p - 1.0) - a
            step = f / (e + (p - 1.0) * w ** (p - 2.0))
            w = np.maximum(w - step, 0.0)
            if np.all(step <= 1e-15 * w):
                break
        return w
    k = 1.0 / (p - 1.0)
    y = np.minimum(a, a ** (p - 1.0) * math.exp(min((p - 1.0) * tau, 700.0)))
    for _ in range(100):
        yk1 = y ** (k - 1.0)
        f = e * y * yk1 + y - a
        step = f / (e * k * yk1 + 1.0)
        y = np.maximum(y - step, 0.0)
        if np.all(step <= 1e-15 * y):
            break
    return y**k


def _project_lp(a: NDArray[np.float64], r: float, p: float) -> NDArray[np.float64]:
    """Project ``a >= 0`` (with ``||a||_p > r``) onto the ``l_p`` ball, ``1 < p < inf``.

    Root-finding on the scaled log-multiplier ``tau`` (see :func:`_solve_scaled`);
    Brent's method keeps a bisection bracket at every step.
    """
    top = a.max()
    a = a / top
    log_r = math.log(r) - math.log(top)

    def gap(tau):
        return math.log(np.sum(_solve_scaled(a, tau, p) ** p)) / p - tau - log_r

    lo, hi = -1.0, 1.0
    while gap(lo) < 0:
        lo -= 4.0
    while gap(hi) > 0:
        hi += 4.0
    tau = optimize.brentq(gap, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps,
                          maxiter=_OUTER_MAX_ITER)
    w = _solve_scaled(a, tau, p)
    norm_w = np.sum(w**p) ** (1.0 / p)
    # exp(-tau) w has norm r / top up to rounding; pin it to the radius.
    scale = math.exp(log_r) / norm_w
    return w * min(scale, math.exp(-tau)) * top


def project_ball(v: ArrayLike, r: float, p: float) -> NDArray[np.float64]:
    """Euclidean projection of ``v`` onto ``{x : ||x||_p <= r}``.

    Exact for ``p`` in ``{1, 2, inf}``; other exponents go through scalar
    root-finding on the KKT multiplier.
    """
    v = np.asarray(v, dtype=float)
    if r < 0:
        raise ValueError(f"radius must be nonnegative, got {r}")
    if r == 0.0:
        return np.zeros_like(v)
    if p == math.inf:
        return np.clip(v, -r, r)
    if p == 2.0:
        nv = group_norm(v, 2.0)
        return v.copy() if nv <= r else v * (r / nv)
    a = np.abs(v)
    if p == 1.0:
        if a.sum() <= r:
            return v.copy()
        theta = l1_threshold(a, r)
        return np.sign(v) * np.maximum(a - theta, 0.0)
    if group_norm(a, p) <= r:
        return v.copy()
    return np.sign(v) * _project_lp(a, r, p)


def prox_lq(v: ArrayLike, t: float, q: float) -> NDArray[np.float64]:
    """``argmin_x 1/2 ||x - v||^2 + t ||x||_q``.

    A whole block is set to zero exactly when ``||v||_{q'} <= t``.
    """
    v = np.asarray(v, dtype=float)
    if t < 0:
        raise ValueError(f"prox weight must be nonnegative, got {t}")
    if t == 0.0:
        return v.copy()
    if q == 1.0:
        return soft_threshold(v, t)
    if q == 2.0:
        nv = group_norm(v, 2.0)
        if nv <= t:
            return np.zeros_like(v)
        return v * (1.0 - t / nv)
    a = np.abs(v)
    if q == math.inf:
        # v - P_{t B_1}(v) clips at the l1 threshold; computed directly so
        # that tied maxima are bit-identical.
        if a.sum() <= t:
            return np.zeros_like(v)
        return np.sign(v) * np.minimum(a, l1_threshold(a, t))
    qp = conjugate(q)
    if group_norm(a, qp) <= t:
        return np.zeros_like(v)
    return v - project_ball(v, t, qp)


def subgradient_residual(v: ArrayLike, g: ArrayLike, q: float) -> float:
    """Violation score of ``g in d||v||_q``; zero iff membership holds.

    Uses the dual-pairing characterisation: ``||g||_{q'} <= 1`` and, when
    ``v != 0``, ``g . v = ||v||_q``. The score is

        max(0, ||g||_{q'} - 1) + |g . v / ||v||_q - 1|

    so it does not depend on the magnitude of ``v``. Tied maxima for
    ``q = inf`` need no special handling.
    """
    v = np.asarray(v, dtype=float)
    g = np.asarray(g, dtype=float)
    if v.shape != g.shape:
        raise ValueError(f"shape mismatch: {v.shape} vs {g.shape}")
    score = max(0.0, group_norm(g, conjugate(q)) - 1.0)
    if np.any(v != 0.0):
        score += abs(float(g @ v) / group_norm(v, q) - 1.0)
    return score
