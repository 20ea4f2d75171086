"""Computable design conditions and theoretical bound evaluators.

Covers induced matrix norms, the restricted Gram eigenvalue, the
irrepresentable constant, a heuristic restricted-eigenvalue estimate, the
``lambda`` schedule ``A sigma sqrt(log m / n)``, and the prediction / l1 /
oracle-inequality bounds it feeds.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .model import GroupedDesign, PenaltySpec, active_set, conjugate, format_q, group_norm, parse_q

__all__ = [
    "DiagnosticsReport",
    "KappaEstimate",
    "LambdaSchedule",
    "NormValue",
    "RateBounds",
    "SingularGramError",
    "Thresholds",
    "irrepresentable_constant",
    "lambda_schedule",
    "min_gram_eigenvalue",
    "operator_norm",
    "operator_norm_estimate",
    "oracle_bound_rhs",
    "oracle_constant",
    "oracle_set_member",
    "rate_bounds",
    "restricted_eigenvalue",
    "selection_verdict",
    "theorem1_verdict",
]

_SQRT8 = 2.0 * math.sqrt(2.0)


class SingularGramError(ValueError):
    """The restricted Gram matrix is (numerically) singular."""

    def __init__(self, c_min: float):
        super().__init__(f"restricted Gram matrix is singular (smallest eigenvalue {c_min:.3e})")
        self.c_min = c_min


class NormValue(NamedTuple):
    """An operator norm; when ``exact`` is False, ``value`` is an ascent lower bound."""

    value: float
    exact: bool
    upper: float


# ---------------------------------------------------------------- norms


def _dual_vector(z: NDArray[np.float64], p: float) -> NDArray[np.float64]:
    """A vector ``x`` with ``||x||_p = 1`` and ``x . z = ||z||_{p'}``."""
    x = np.zeros_like(z)
    if not np.any(z):
        x[0] = 1.0
        return x
    if p == 1.0:
        k = int(np.argmax(np.abs(z)))
        x[k] = 1.0 if z[k] >= 0 else -1.0
        return x
    if p == math.inf:
        return np.where(z >= 0, 1.0, -1.0)
    pp = conjugate(p)
    a = np.abs(z) / np.max(np.abs(z))
    x = np.sign(z) * a ** (pp - 1.0)
    return x / group_norm(x, p)


def operator_norm_estimate(
    A: ArrayLike, a: float, b: float, starts: int = 20, seed: int = 0, iters: int = 200
) -> float:
    """Lower bound on ``||A||_{a,b}`` by Boyd's power iteration from several starts.

    Every returned value is ``||Ax||_b / ||x||_a`` at an actual ``x``.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    rng = np.random.default_rng(seed)
    ncol = A.shape[1]
    inits = [np.eye(ncol)[k] for k in range(min(ncol, starts))]
    inits += [rng.standard_normal(ncol) for _ in range(max(starts - len(inits), 0))]
    bp = conjugate(b)
    best = 0.0
    for x in inits:
        x = x / group_norm(x, a)
        for _ in range(iters):
            y = A @ x
            val = group_norm(y, b)
            best = max(best, val)
            if val == 0.0:
                break
            x_new = _dual_vector(A.T @ _dual_vector(y, bp), a)
            if np.allclose(x_new, x, rtol=0, atol=1e-14):
                break
            x = x_new
        best = max(best, group_norm(A @ x, b) / group_norm(x, a))
    return best


def operator_norm(A: ArrayLike, a, b, starts: int = 20, seed: int = 0) -> NormValue:
    """Induced norm ``sup ||Ax||_b / ||x||_a``.

    Exact for ``a = 1`` (largest column ``b``-norm), ``b = inf`` (largest row
    ``a'``-norm) and ``a = b = 2`` (largest singular value). Other pairs return
    an ascent lower bound; for ``a = b`` the upper field carries the
    Riesz-Thorin bound ``||A||_{1,1}^{1/a} ||A||_{inf,inf}^{1-1/a}``.
    """
    a, b = parse_q(a), parse_q(b)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.size == 0:
        return NormValue(0.0, True, 0.0)
    if a == 1.0:
        v = max(group_norm(A[:, k], b) for k in range(A.shape[1]))
        return NormValue(v, True, v)
    if b == math.inf:
        ap = conjugate(a)
        v = max(group_norm(A[i], ap) for i in range(A.shape[0]))
        return NormValue(v, True, v)
    if a == 2.0 and b == 2.0:
        v = float(np.linalg.norm(A, 2))
        return NormValue(v, True, v)
    low = operator_norm_estimate(A, a, b, starts=starts, seed=seed)
    if a == b:
        n11 = float(np.abs(A).sum(axis=0).max())
        ninf = float(np.abs(A).sum(axis=1).max())
        upper = n11 ** (1.0 / a) * ninf ** (1.0 - 1.0 / a)
    else:
        upper = math.inf
    return NormValue(low, False, max(upper, low))


# ---------------------------------------------------------------- Gram conditions


def _gram(design: GroupedDesign, S: Sequence[int]) -> NDArray[np.float64]:
    XS = design.X[:, design.columns(S)]
    return XS.T @ XS / design.n


def min_gram_eigenvalue(design: GroupedDesign, S: Sequence[int]) -> float:
    S = list(S)
    if not S:
        raise ValueError("support must be nonempty")
    return float(np.linalg.eigvalsh(_gram(design, S))[0])


def irrepresentable_constant(design: GroupedDesign, S: Sequence[int], q) -> NormValue:
    """``max_{j not in S} ||X_j^T X_S (X_S^T X_S)^{-1}||_{q',q'}`` (0 for empty complement)."""
    q = parse_q(q)
    S = sorted(set(S))
    if not S:
        raise ValueError("support must be nonempty")
    G = _gram(design, S)
    c_min = float(np.linalg.eigvalsh(G)[0])
    if c_min <= 1e-10:
        raise SingularGramError(c_min)
    XS = design.X[:, design.columns(S)]
    qp = conjugate(q)
    low = up = 0.0
    exact = True
    for j in range(design.p):
        if j in S:
            continue
        cross = design.block(j).T @ XS / design.n
        M = np.linalg.solve(G, cross.T).T
        nv = operator_norm(M, qp, qp)
        low = max(low, nv.value)
        up = max(up, nv.upper)
        exact &= nv.exact
    return NormValue(low, exact, up)


# ---------------------------------------------------------------- restricted eigenvalue


@dataclass(frozen=True)
class KappaEstimate:
    """Smallest cone ratio found; an upper bound on the true restricted eigenvalue."""

    value: float
    heuristic: bool
    exhaustive: bool
    subsets_evaluated: int
    subsets_total: int
    budget_exhausted: bool


def _norm_grad(v, q):
    """A (sub)gradient of ``||v||_q`` at ``v != 0``."""
    if q == 1.0:
        return np.sign(v)
    if q == 2.0:
        return v / np.linalg.norm(v)
    a = np.abs(v)
    if q == math.inf:
        top = a.max()
        hit = a == top
        return np.sign(v) * hit / hit.sum()
    top = a.max()
    s = a / top
    return np.sign(v) * s ** (q - 1.0) / np.sum(s**q) ** ((q - 1.0) / q)


class _ConeProblem:
    """Cone-restricted ratio for a fixed ``S0``."""

    def __init__(self, design, G, S0, multiplier, q):
        self.design = design
        self.G = G
        self.q = q
        self.c = multiplier
        qp = conjugate(q)
        d = np.asarray(design.sizes, dtype=float)
        self.w = PenaltySpec(q).weights(design.sizes)
        self.u = np.ones_like(d) if qp == 2.0 else d ** (2.0 / qp - 1.0)
        self.inside = np.zeros(design.p, dtype=bool)
        self.inside[list(S0)] = True
        self.slices = design.slices
        self.sizes = np.asarray(design.sizes)
        self.starts = np.concatenate([[0], np.cumsum(self.sizes)[:-1]])
        self.off_cols = ~np.repeat(self.inside, self.sizes)

    def norms(self, g):
        a = np.abs(g)
        if self.q == math.inf:
            return np.maximum.reduceat(a, self.starts)
        if self.q == 1.0:
            return np.add.reduceat(a, self.starts)
        if self.q == 2.0:
            return np.sqrt(np.add.reduceat(a * a, self.starts))
        top = np.maximum.reduceat(a, self.starts)
        safe = np.where(top > 0, top, 1.0)
        scaled = a / np.repeat(safe, self.sizes)
        return top * np.add.reduceat(scaled**self.q, self.starts) ** (1.0 / self.q)

    def retract(self, g):
        """Map onto the cone (shrinking the off-support part) and normalise the denominator."""
        nr = self.norms(g)
        den = math.sqrt(float(np.sum(self.u[self.inside] * nr[self.inside] ** 2)))
        if den == 0.0 or not np.isfinite(den):
            return None
        on = float(np.sum(self.w[self.inside] * nr[self.inside]))
        off = float(np.sum(self.w[~self.inside] * nr[~self.inside]))
        g = g.copy()
        if off > self.c * on:
            g[self.off_cols] *= self.c * on / off
        return g / den

    def ratio(self, g):
        return math.sqrt(max(float(g @ self.G @ g), 0.0))

    def grad(self, g, r2):
        out = 2.0 * (self.G @ g)
        nr = self.norms(g)
        for j in np.flatnonzero(self.inside):
            if nr[j] > 0:
                sl = self.slices[j]
                out[sl] -= r2 * 2.0 * self.u[j] * nr[j] * _norm_grad(g[sl], self.q)
        return out

    def descend(self, g0, max_steps):
        g = self.retract(g0)
        if g is None:
            return math.inf
        val = self.ratio(g)
        eta = 1.0
        for _ in range(max_steps):
            direction = self.grad(g, val * val)
            improved = False
            while eta > 1e-12:
                cand = self.retract(g - eta * direction)
                if cand is not None:
                    cv = self.ratio(cand)
                    if cv < val * (1.0 - 1e-12):
                        g, val = cand, cv
                        eta *= 2.0
                        improved = True
                        break
                eta *= 0.5
            if not improved:
                break
        return val


def restricted_eigenvalue(
    design: GroupedDesign,
    s_max: int,
    multiplier: float,
    q,
    budget: int = 200,
    starts: int = 4,
    max_steps: int = 200,
    seed: int = 0,
) -> KappaEstimate:
    """Heuristic estimate of the cone-restricted eigenvalue.

    Minimises ``||X g|| / (sqrt(n) sqrt(sum_{S0} d_j^{2/q'-1} ||g_j||_q^2))`` over
    ``g`` with ``sum_{S0^c} w_j ||g_j||_q <= multiplier * sum_{S0} w_j ||g_j||_q``.
    Both the cone and the denominator grow with ``S0``, so only supports of size
    ``s_max`` are searched: all of them if there are at most ``budget``, a seeded
    random sample of ``budget`` otherwise. Each support gets a projected descent
    from several starts (random ones and low eigenvectors of the Gram matrix).

    The value is attained at a feasible point, so it never underestimates the
    true minimum.
    """
    q = parse_q(q)
    if not 1 <= s_max <= design.p:
        raise ValueError(f"s_max must lie in [1, {design.p}], got {s_max}")
    rng = np.random.default_rng(seed)
    G = design.X.T @ design.X / design.n
    evals, evecs = np.linalg.eigh(G)
    low_vecs = [evecs[:, k] for k in range(min(2, design.m))]
    total = math.comb(design.p, s_max)
    if total <= budget:
        subsets = itertools.combinations(range(design.p), s_max)
        exhaustive = True
    else:
        subsets = (
            tuple(sorted(rng.choice(design.p, size=s_max, replace=False)))
            for _ in range(budget)
        )
        exhaustive = False
    best = math.inf
    count = 0
    for S0 in subsets:
        count += 1
        prob = _ConeProblem(design, G, S0, multiplier, q)
        cols = design.columns(S0)
        inits = list(low_vecs)
        for k in range(starts):
            g = np.zeros(design.m)
            if k % 2 == 0:
                g[cols] = rng.standard_normal(cols.size)
            else:
                g = rng.standard_normal(design.m)
            inits.append(g)
        for g0 in inits:
            best = min(best, prob.descend(g0, max_steps))
    return KappaEstimate(best, True, exhaustive, count, total, not exhaustive)


# ---------------------------------------------------------------- schedules and bounds


class LambdaSchedule(NamedTuple):
    lam: float
    prob_floor: float


def lambda_schedule(A: float, sigma: float, m: int, n: int) -> LambdaSchedule:
    """``lam = A sigma sqrt(log m / n)``, valid with probability >= ``1 - m^(1 - A^2/8)``."""
    if not A > _SQRT8:
        raise ValueError(f"A must exceed 2*sqrt(2) = {_SQRT8:.6f}, got {A}")
    if m < 2 or n < 1:
        raise ValueError(f"need m >= 2 and n >= 1, got m={m}, n={n}")
    lam = A * sigma * math.sqrt(math.log(m) / n)
    return LambdaSchedule(lam, 1.0 - m ** (1.0 - A * A / 8.0))


class RateBounds(NamedTuple):
    prediction: float
    l1: float


def rate_bounds(A, sigma, kappa, s, d_bar, m, n) -> RateBounds:
    """Prediction-error and l1-error bounds at ``lam = A sigma sqrt(log m / n)``.

    ``prediction = 9 lam^2 s d_bar / kappa^2`` and ``l1 = 12 lam s d_bar / kappa^2``.
    """
    if not kappa > 0:
        raise ValueError(f"kappa must be positive, got {kappa}")
    lam = A * sigma * math.sqrt(math.log(m) / n)
    k2 = kappa * kappa
    return RateBounds(9.0 * lam * lam * s * d_bar / k2, 12.0 * lam * s * d_bar / k2)


def oracle_constant(delta: float) -> float:
    """``C(delta) = 8 b^2 / (b + 1)`` with ``b = 1 + 2/delta``.

    With this choice ``(1 + delta) C(delta) = 8 b^2 / (b - 1)``, the coefficient
    left by the decoupling step, since ``(b + 1) / (b - 1) = 1 + delta``.
    """
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta}")
    b = 1.0 + 2.0 / delta
    return 8.0 * b * b / (b + 1.0)


def _approx_error(design, f_star, beta) -> float:
    f_star = np.asarray(f_star, dtype=float)
    resid = f_star - design.X @ design.check_beta(beta)
    return float(resid @ resid) / design.n


def oracle_bound_rhs(
    design: GroupedDesign,
    f_star: ArrayLike,
    beta: ArrayLike,
    delta: float,
    kappa: float,
    A: float,
    sigma: float,
    m: int | None = None,
    n: int | None = None,
) -> float:
    """Right-hand side of the sparsity oracle inequality at a candidate ``beta``.

    ``(1 + delta) [ ||f* - X beta||^2 / n
    + C(delta) A^2 sigma^2 / kappa^2 * d_bar |S(beta)| log m / n ]``.
    """
    if not kappa > 0:
        raise ValueError(f"kappa must be positive, got {kappa}")
    m = design.m if m is None else m
    n = design.n if n is None else n
    support = len(active_set(design, beta))
    complexity = design.d_bar * support * math.log(m) / n
    pen = oracle_constant(delta) * A * A * sigma * sigma / (kappa * kappa) * complexity
    return (1.0 + delta) * (_approx_error(design, f_star, beta) + pen)


def oracle_set_member(
    design: GroupedDesign, f_star: ArrayLike, beta: ArrayLike, B: float, lam: float
) -> bool:
    """Whether ``||f* - X beta||^2 / n <= B lam^2 |S(beta)|``."""
    support = len(active_set(design, beta))
    return _approx_error(design, f_star, beta) <= B * lam * lam * support


# ---------------------------------------------------------------- report


@dataclass(frozen=True)
class Thresholds:
    c_min: float = 1e-10
    lambda_rate: float = 10.0
    rho_condition: float = 0.5


@dataclass
class DiagnosticsReport:
    q: str
    support: list[int]
    c_min: float
    irrep_const: float
    irrep_exact: bool
    irrep_upper: float
    delta: float
    rho_star: float | None
    lambda_value: float
    lambda_prob_floor: float | None
    lambda_rate_scalar: float
    rho_condition_scalar: float | None
    kappa_estimate: float | None
    kappa_heuristic: bool
    verdicts: dict[str, bool | None]
    thresholds: dict[str, float]
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        out = asdict(self)
        for k, v in out.items():
            if isinstance(v, float) and not math.isfinite(v):
                out[k] = repr(v)
        return out


def selection_verdict(
    design: GroupedDesign,
    q,
    lam: float | None = None,
    beta_star: ArrayLike | None = None,
    support: Sequence[int] | None = None,
    sigma: float | None = None,
    A: float | None = None,
    thresholds: Thresholds = Thresholds(),
    kappa_budget: int | None = None,
) -> DiagnosticsReport:
    """Evaluate the selection-consistency conditions on a finite design.

    The support comes from ``beta_star`` (its nonzero groups) or from
    ``support``. Without ``lam`` it is taken from :func:`lambda_schedule`,
    which then needs ``A`` and ``sigma``. Asymptotic conditions become scalars
    compared to the recorded thresholds: ``lam^2 n / log((p - s) d_bar)`` must be
    at least ``thresholds.lambda_rate`` and

        (1/rho*) [sqrt(log(s d_bar) / n) + lam d_bar^{1/q'} ||Sigma_SS^{-1}||_{inf,inf}]

    at most ``thresholds.rho_condition``.

    Raises
    ------
    SingularGramError
        When the restricted Gram matrix has smallest eigenvalue below
        ``thresholds.c_min``.
    ValueError
        On an empty support, or a support group whose true coefficients vanish.
    """
    q = parse_q(q)
    qp = conjugate(q)
    rho_star = None
    if beta_star is not None:
        blocks = design.split(beta_star)
        nonzero = [j for j, b in enumerate(blocks) if np.any(b != 0)]
        S = sorted(set(support)) if support is not None else nonzero
        zero_in_S = [j for j in S if not np.any(blocks[j] != 0)]
        if zero_in_S:
            raise ValueError(f"support groups {zero_in_S} have zero coefficients (rho* = 0)")
        if S:
            rho_star = min(float(np.max(np.abs(blocks[j]))) for j in S)
    elif support is not None:
        S = sorted(set(int(j) for j in support))
    else:
        raise ValueError("need beta_star or support")
    if not S:
        raise ValueError("support is empty")
    if any(j < 0 or j >= design.p for j in S):
        raise ValueError(f"support indices must lie in [0, {design.p})")

    G = _gram(design, S)
    c_min = float(np.linalg.eigvalsh(G)[0])
    if c_min < max(thresholds.c_min, 1e-10):
        raise SingularGramError(c_min)
    irrep = irrepresentable_constant(design, S, q)

    prob_floor = None
    if lam is None:
        if A is None or sigma is None:
            raise ValueError("need lam, or both A and sigma")
        lam, prob_floor = lambda_schedule(A, sigma, design.m, design.n)
    s = len(S)
    d_bar = design.d_bar
    dlog = math.log((design.p - s) * d_bar) if (design.p - s) * d_bar > 0 else -math.inf
    lambda_rate = lam * lam * design.n / dlog if dlog > 0 else math.inf

    rho_scalar = None
    if rho_star is not None:
        inv_norm = float(np.abs(np.linalg.inv(G)).sum(axis=1).max())
        w = 1.0 if qp == math.inf else d_bar ** (1.0 / qp)
        rho_scalar = (math.sqrt(math.log(s * d_bar) / design.n) + lam * w * inv_norm) / rho_star

    kappa = None
    if kappa_budget:
        kappa = restricted_eigenvalue(design, s, 3.0, q, budget=kappa_budget).value

    verdicts = {
        "c_min_positive": c_min >= thresholds.c_min,
        "irrepresentable": irrep.upper < 1.0,
        "lambda_rate": lambda_rate >= thresholds.lambda_rate,
        "rho_condition": None if rho_scalar is None else rho_scalar <= thresholds.rho_condition,
    }
    notes = []
    if not irrep.exact:
        notes.append("irrepresentable constant is an ascent lower bound; verdict uses the upper bound")
    if rho_star is None:
        notes.append("no coefficients supplied; rho* condition not evaluated")
    return DiagnosticsReport(
        q=format_q(q),
        support=S,
        c_min=c_min,
        irrep_const=irrep.value,
        irrep_exact=irrep.exact,
        irrep_upper=irrep.upper,
        delta=1.0 - irrep.value,
        rho_star=rho_star,
        lambda_value=lam,
        lambda_prob_floor=prob_floor,
        lambda_rate_scalar=lambda_rate,
        rho_condition_scalar=rho_scalar,
        kappa_estimate=kappa,
        kappa_heuristic=True,
        verdicts=verdicts,
        thresholds=asdict(thresholds),
        notes=notes,
    )


theorem1_verdict = selection_verdict
