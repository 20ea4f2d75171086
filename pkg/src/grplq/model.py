"""Grouped designs, penalty settings, block norms and the objective.

Groups are contiguous column ranges described by their sizes ``d_1, ..., d_p``.
The penalised least-squares objective is

.. math::

    \\frac{1}{2n}\\|y - X\\beta\\|_2^2
        + \\lambda \\sum_j d_j^{1/q'} \\|\\beta_j\\|_q

with ``q'`` the conjugate exponent of ``q``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

__all__ = [
    "DesignError",
    "GroupedDesign",
    "PenaltySpec",
    "active_set",
    "conjugate",
    "format_q",
    "group_norm",
    "objective",
    "parse_q",
    "penalty_value",
    "standardize",
]


class DesignError(ValueError):
    """Raised for malformed designs, partitions or coefficient vectors."""


def parse_q(value) -> float:
    """Parse an exponent given as a number or as ``"1"``, ``"2"``, ``"inf"``, ``"1.5"``.

    The result is a canonical float (``math.inf`` for the max-norm), so that
    later dispatch on ``q == 1.0`` / ``q == 2.0`` / ``q == math.inf`` compares
    parsed literals, never computed values.
    """
    if isinstance(value, str):
        text = value.strip().lower()
        if text in ("inf", "infinity", "+inf"):
            q = math.inf
        else:
            try:
                q = float(text)
            except ValueError:
                raise ValueError(f"cannot parse exponent q={value!r}") from None
    else:
        q = float(value)
    if math.isnan(q) or q < 1.0:
        raise ValueError(f"q must lie in [1, inf], got {value!r}")
    return q


def conjugate(q: float) -> float:
    """Conjugate exponent ``q'`` with ``1/q + 1/q' = 1`` (and ``1/inf = 0``)."""
    if q == 1.0:
        return math.inf
    if q == math.inf:
        return 1.0
    return q / (q - 1.0)


def format_q(q: float) -> str:
    """Inverse of :func:`parse_q` for the canonical values, ``repr`` otherwise."""
    if q == math.inf:
        return "inf"
    if q == 1.0:
        return "1"
    if q == 2.0:
        return "2"
    return repr(float(q))


def group_norm(v: ArrayLike, q: float) -> float:
    """The ``l_q`` norm of a vector, ``1 <= q <= inf``.

    Exponents other than 1 and inf factor out ``max |v_i|`` first so that
    extreme magnitudes neither overflow nor underflow.
    """
    a = np.abs(np.asarray(v, dtype=float)).ravel()
    if a.size == 0:
        return 0.0
    if q == 1.0:
        return float(a.sum())
    if q == math.inf:
        return float(a.max())
    top = a.max()
    if top == 0.0:
        return 0.0
    if q == 2.0:
        return float(top * np.linalg.norm(a / top))
    return float(top * np.sum((a / top) ** q) ** (1.0 / q))


def _sizes_from_groups(groups, m: int) -> tuple[int, ...]:
    """Accept group sizes or an ordered list of contiguous column-index lists."""
    groups = list(groups)
    if not groups:
        raise DesignError("partition must contain at least one group")
    if all(np.isscalar(g) for g in groups):
        sizes = tuple(int(g) for g in groups)
    else:
        sizes = []
        expected = 0
        for j, g in enumerate(groups):
            idx = [int(i) for i in g]
            if not idx or idx != list(range(expected, expected + len(idx))):
                raise DesignError(
                    f"group {j} is not the contiguous range starting at column {expected}"
                )
            sizes.append(len(idx))
            expected += len(idx)
        sizes = tuple(sizes)
    if any(d < 1 for d in sizes):
        raise DesignError(f"every group needs at least one column, got sizes {sizes}")
    if sum(sizes) != m:
        raise DesignError(
            f"partition covers {sum(sizes)} columns but the design has {m}"
        )
    return sizes


@dataclass(frozen=True, eq=False)
class GroupedDesign:
    """An ``n x m`` design whose columns are split into ``p`` contiguous groups.

    Attributes
    ----------
    X : ndarray of shape (n, m)
        Read-only design matrix.
    sizes : tuple of int
        Group sizes ``d_j``; they sum to ``m``.
    scale : ndarray of shape (m,), optional
        Column multipliers applied by :func:`standardize` (``X = X_raw * scale``).
    center : ndarray of shape (m,), optional
        Column means removed before scaling, if centering was requested.
    """

    X: NDArray[np.float64]
    sizes: tuple[int, ...]
    scale: NDArray[np.float64] | None = None
    center: NDArray[np.float64] | None = None
    _starts: NDArray[np.intp] = field(init=False, repr=False)

    def __post_init__(self):
        X = np.array(self.X, dtype=float, copy=True)
        if X.ndim != 2:
            raise DesignError(f"design must be a 2-d array, got shape {X.shape}")
        if X.shape[0] < 1:
            raise DesignError("design needs at least one row")
        if not np.all(np.isfinite(X)):
            raise DesignError("design contains non-finite entries")
        X.flags.writeable = False
        sizes = _sizes_from_groups(self.sizes, X.shape[1])
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "_starts", np.concatenate([[0], np.cumsum(sizes)]))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def m(self) -> int:
        return self.X.shape[1]

    @property
    def p(self) -> int:
        return len(self.sizes)

    @property
    def d_bar(self) -> int:
        return max(self.sizes)

    @property
    def slices(self) -> list[slice]:
        s = self._starts
        return [slice(int(s[j]), int(s[j + 1])) for j in range(self.p)]

    def block(self, j: int) -> NDArray[np.float64]:
        """Columns of group ``j`` (a read-only view)."""
        return self.X[:, self._starts[j] : self._starts[j + 1]]

    def columns(self, groups: Sequence[int]) -> NDArray[np.intp]:
        """Column indices covered by the given groups, in group order."""
        s = self._starts
        parts = [np.arange(s[j], s[j + 1]) for j in groups]
        return np.concatenate(parts) if parts else np.zeros(0, dtype=np.intp)

    def split(self, beta: ArrayLike) -> list[NDArray[np.float64]]:
        beta = self.check_beta(beta)
        return [beta[sl] for sl in self.slices]

    def check_beta(self, beta: ArrayLike) -> NDArray[np.float64]:
        beta = np.asarray(beta, dtype=float)
        if beta.shape != (self.m,):
            raise DesignError(
                f"coefficient vector has shape {beta.shape}, expected ({self.m},)"
            )
        return beta

    def is_standardized(self, tol: float = 1e-12) -> bool:
        norms = np.sum(self.X**2, axis=0) / self.n
        return bool(np.all(np.abs(norms - 1.0) <= tol))

    def to_original(self, beta: ArrayLike) -> NDArray[np.float64]:
        """Map coefficients of the standardized design back to raw column units."""
        beta = self.check_beta(beta)
        return beta if self.scale is None else beta * self.scale

    def restrict(self, groups: Sequence[int]) -> "GroupedDesign":
        """Sub-design made of the listed groups."""
        groups = list(groups)
        return GroupedDesign(self.X[:, self.columns(groups)], [self.sizes[j] for j in groups])


def standardize(X: ArrayLike, groups, center: bool = False) -> GroupedDesign:
    """Rescale every column so that ``(1/n) ||X[:, k]||^2 = 1``.

    Parameters
    ----------
    X : array_like of shape (n, m)
    groups : sequence
        Group sizes, or an ordered list of contiguous column-index lists.
    center : bool
        Subtract column means first. The response must then be centered by the
        caller as well.

    Raises
    ------
    DesignError
        On a zero column (the message names it) or a partition that does not
        cover the columns.
    """
    X = np.array(X, dtype=float, copy=True)
    if X.ndim != 2 or X.shape[0] < 1:
        raise DesignError(f"design must be a 2-d array with n >= 1, got shape {X.shape}")
    n = X.shape[0]
    sizes = _sizes_from_groups(groups, X.shape[1])
    means = None
    if center:
        means = X.mean(axis=0)
        X -= means
    norms = np.sqrt(np.sum(X**2, axis=0))
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise DesignError(f"column {int(zero[0])} is identically zero")
    scale = math.sqrt(n) / norms
    return GroupedDesign(X * scale, sizes, scale=scale, center=means)


@dataclass(frozen=True)
class PenaltySpec:
    """Exponent ``q`` and level ``lam`` of the block penalty."""

    q: float
    lam: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "q", parse_q(self.q))
        if not (self.lam >= 0.0) or math.isinf(self.lam):
            raise ValueError(f"lambda must be a finite nonnegative number, got {self.lam}")
        object.__setattr__(self, "lam", float(self.lam))

    @property
    def q_prime(self) -> float:
        return conjugate(self.q)

    def weights(self, sizes: Sequence[int]) -> NDArray[np.float64]:
        """Per-group weights ``d_j^{1/q'}``."""
        d = np.asarray(sizes, dtype=float)
        qp = self.q_prime
        if qp == math.inf:
            return np.ones_like(d)
        if qp == 1.0:
            return d
        return d ** (1.0 / qp)

    def with_lambda(self, lam: float) -> "PenaltySpec":
        return PenaltySpec(self.q, lam)


def block_norms(design: GroupedDesign, beta: ArrayLike, q: float) -> NDArray[np.float64]:
    return np.array([group_norm(b, q) for b in design.split(beta)])


def penalty_value(beta: ArrayLike, spec: PenaltySpec, design: GroupedDesign) -> float:
    """``sum_j d_j^{1/q'} ||beta_j||_q`` (the penalty without the factor lambda)."""
    return float(np.dot(spec.weights(design.sizes), block_norms(design, beta, spec.q)))


def objective(
    design: GroupedDesign, y: ArrayLike, beta: ArrayLike, spec: PenaltySpec
) -> float:
    y = np.asarray(y, dtype=float)
    if y.shape != (design.n,):
        raise DesignError(f"response has shape {y.shape}, expected ({design.n},)")
    beta = design.check_beta(beta)
    r = y - design.X @ beta
    loss = float(r @ r) / (2.0 * design.n)
    if spec.lam == 0.0:
        return loss
    return loss + spec.lam * penalty_value(beta, spec, design)


def active_set(design: GroupedDesign, beta: ArrayLike, tol: float = 0.0) -> list[int]:
    """Groups with ``||beta_j||_inf > tol``; recomputed from ``beta`` on every call."""
    return [j for j, b in enumerate(design.split(beta)) if b.size and np.max(np.abs(b)) > tol]
