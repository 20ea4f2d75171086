"""Synthetic instances and Monte Carlo harnesses.

Three harnesses share one generator: ``selection`` (exact support recovery
rate), ``rates`` (l1 and prediction error against the theoretical bounds) and
``persistency`` (excess population risk of the norm-constrained fit under a
random Gaussian design, optionally with a quadratic misspecification).
The stacked formulation of the multi-response Lasso with a shared row-sparsity
penalty also lives here.

Random numbers are drawn from counter-based Philox streams, one per
``(seed, n, replicate, stream)``; see ``docs/RNG.md``.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Callable, NamedTuple, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .diagnostics import lambda_schedule, rate_bounds, restricted_eigenvalue
from .model import GroupedDesign, PenaltySpec, active_set, objective, parse_q, penalty_value, standardize
from .solver import BracketError, SolverOptions, fit, fit_constrained

__all__ = [
    "DESIGN_KINDS",
    "MODES",
    "ExperimentConfig",
    "Instance",
    "McReport",
    "McRow",
    "PhiloxStream",
    "gen_instance",
    "run_experiment",
    "run_persistency",
    "run_rates",
    "run_selection",
    "simlasso_fit",
    "simlasso_objective",
    "simlasso_reduce",
    "stacked_objective",
]

DESIGN_KINDS = ("gaussian-iid", "equicorrelated", "orthonormalized")
MODES = ("selection", "rates", "persistency")

STREAM_DESIGN = 0
STREAM_BETA = 1
STREAM_NOISE = 2

_U64 = 2**64
_SQRT8 = 2.0 * math.sqrt(2.0)


# ---------------------------------------------------------------- random streams


class PhiloxStream:
    """Uniform and Gaussian draws from one Philox4x64-10 stream.

    The key is ``(seed, (n << 32) | (replicate << 8) | stream)``. The 256-bit
    counter is incremented before each block, so the first four words come
    from counter ``(1, 0, 0, 0)``. A raw 64-bit word ``w`` becomes the uniform
    ``((w >> 11) + 0.5) / 2^53`` in ``(0, 1)``; Gaussians come from Box-Muller
    on consecutive uniform pairs ``(u1, u2)`` as ``r cos(2 pi u2)`` then
    ``r sin(2 pi u2)`` with ``r = sqrt(-2 log u1)``.
    """

    def __init__(self, seed: int, n: int, replicate: int, stream: int):
        if not 0 <= seed < _U64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
        if not 0 <= n < 2**32 or not 0 <= replicate < 2**24 or not 0 <= stream < 256:
            raise ValueError(f"stream coordinates out of range: n={n}, rep={replicate}, stream={stream}")
        word = (n << 32) | (replicate << 8) | stream
        self.key = (int(seed), word)
        self._bitgen = np.random.Philox(key=np.array(self.key, dtype=np.uint64))

    def raw(self, size: int) -> NDArray[np.uint64]:
        return self._bitgen.random_raw(size)

    def uniform(self, size: int) -> NDArray[np.float64]:
        w = self.raw(size)
        return ((w >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53

    def normal(self, size: int) -> NDArray[np.float64]:
        pairs = (size + 1) // 2
        u = self.uniform(2 * pairs).reshape(pairs, 2)
        r = np.sqrt(-2.0 * np.log(u[:, 0]))
        theta = 2.0 * np.pi * u[:, 1]
        z = np.empty((pairs, 2))
        z[:, 0] = r * np.cos(theta)
        z[:, 1] = r * np.sin(theta)
        return z.ravel()[:size]


# ---------------------------------------------------------------- config


@dataclass
class ExperimentConfig:
    """Monte Carlo experiment settings.

    ``ln_c`` and ``ln_exponent`` set the persistency budget
    ``L_n = ln_c * (n / log n) ** ln_exponent``; ``misspec`` is the coefficient
    ``c`` of the quadratic term ``c (x_1^2 - 1)`` added to the regression
    function. ``xi`` feeds the per-row check ``log m <= n ** xi``.
    """

    n_grid: list[int]
    p: int
    s: int
    d_sizes: list[int]
    q: str = "2"
    A: float = 3.0
    sigma: float = 0.5
    beta_magnitude: float = 1.0
    design_kind: str = "orthonormalized"
    rho: float = 0.0
    replicates: int = 100
    seed: int = 0
    xi: float = 0.9
    ln_c: float = 1.0
    ln_exponent: float = 0.2
    misspec: float = 0.0
    active_tol: float = 1e-6
    solver_tol: float = 1e-8
    max_iter: int = 10000
    kappa_budget: int = 20

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        missing = [k for k in ("n_grid", "p", "s", "d_sizes") if k not in data]
        if missing:
            raise ValueError(f"missing config keys: {', '.join(missing)}")
        data = dict(data)
        if isinstance(data["d_sizes"], int):
            data["d_sizes"] = [data["d_sizes"]] * int(data["p"])
        data["q"] = str(data.get("q", "2"))
        return cls(**data)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @property
    def m(self) -> int:
        return int(sum(self.d_sizes))

    @property
    def q_value(self) -> float:
        return parse_q(self.q)

    def validate(self) -> list[str]:
        """Invariant violations; an empty list means the config is usable."""
        bad = []
        if not self.n_grid or any(not isinstance(n, int) or n < 1 for n in self.n_grid):
            bad.append("n_grid must be a nonempty list of positive integers")
        if not isinstance(self.p, int) or self.p < 1:
            bad.append("p must be a positive integer")
        if not isinstance(self.s, int) or not 0 <= self.s <= self.p:
            bad.append("s must satisfy 0 <= s <= p")
        if len(self.d_sizes) != self.p or any(not isinstance(d, int) or d < 1 for d in self.d_sizes):
            bad.append("d_sizes must list p positive integers")
        elif self.m < 2:
            bad.append("need at least two coefficients (m >= 2)")
        try:
            parse_q(self.q)
        except ValueError as exc:
            bad.append(f"q: {exc}")
        if not self.A > _SQRT8:
            bad.append("A must exceed 2*sqrt(2)")
        if not self.sigma >= 0:
            bad.append("sigma must be nonnegative")
        if self.s > 0 and not self.beta_magnitude > 0:
            bad.append("beta_magnitude must be positive when s > 0 (rho* = 0 otherwise)")
        if self.design_kind not in DESIGN_KINDS:
            bad.append(f"design_kind must be one of {', '.join(DESIGN_KINDS)}")
        if not 0 <= self.rho < 1:
            bad.append("rho must lie in [0, 1)")
        if not isinstance(self.replicates, int) or self.replicates < 1:
            bad.append("replicates must be a positive integer")
        if not isinstance(self.seed, int) or not 0 <= self.seed < _U64:
            bad.append("seed must be an integer in [0, 2^64)")
        if not 0 < self.xi < 1:
            bad.append("xi must lie in (0, 1)")
        if not self.ln_c >= 0:
            bad.append("ln_c must be nonnegative")
        if not 0 <= self.ln_exponent < 0.25:
            bad.append("ln_exponent must lie in [0, 1/4)")
        if not self.active_tol >= 0:
            bad.append("active_tol must be nonnegative")
        if not self.solver_tol > 0 or not isinstance(self.max_iter, int) or self.max_iter < 1:
            bad.append("solver_tol must be positive and max_iter a positive integer")
        if not isinstance(self.kappa_budget, int) or self.kappa_budget < 1:
            bad.append("kappa_budget must be a positive integer")
        if self.n_grid and self.replicates >= 2**24:
            bad.append("replicates must be below 2^24")
        return bad

    def check(self) -> None:
        bad = self.validate()
        if bad:
            raise ValueError("invalid experiment config: " + "; ".join(bad))

    def solver_options(self) -> SolverOptions:
        return SolverOptions(tol=self.solver_tol, max_iter=self.max_iter)


# ---------------------------------------------------------------- instances


class Instance(NamedTuple):
    design: GroupedDesign
    y: NDArray[np.float64]
    beta_star: NDArray[np.float64]
    f_star: NDArray[np.float64]


def _raw_design(config: ExperimentConfig, n: int, rep: int) -> NDArray[np.float64]:
    m = config.m
    rs = PhiloxStream(config.seed, n, rep, STREAM_DESIGN)
    Z = rs.normal(n * m).reshape(n, m)
    kind = config.design_kind
    if kind == "gaussian-iid":
        return Z
    if kind == "equicorrelated":
        shared = rs.normal(n)
        return math.sqrt(1.0 - config.rho) * Z + math.sqrt(config.rho) * shared[:, None]
    # orthonormalized: orthonormal columns when n >= m, orthonormal rows otherwise
    if n >= m:
        Q, _ = np.linalg.qr(Z)
        return math.sqrt(n) * Q
    Q, _ = np.linalg.qr(Z.T)
    return Q.T


def _beta_star(config: ExperimentConfig, n: int, rep: int) -> NDArray[np.float64]:
    rs = PhiloxStream(config.seed, n, rep, STREAM_BETA)
    order = np.argsort(rs.uniform(config.p), kind="stable")
    support = np.sort(order[: config.s])
    beta = np.zeros(config.m)
    starts = np.concatenate([[0], np.cumsum(config.d_sizes)])
    cols = np.concatenate([np.arange(starts[j], starts[j + 1]) for j in support]) if config.s else []
    cols = np.asarray(cols, dtype=np.intp)
    signs = np.where(rs.uniform(cols.size) < 0.5, -1.0, 1.0)
    beta[cols] = config.beta_magnitude * signs
    return beta


def gen_instance(
    config: ExperimentConfig, n: int, replicate: int, standardized: bool = True
) -> Instance:
    """Draw ``(design, y, beta_star, f_star)`` for one cell and replicate.

    A deterministic function of ``(config.seed, n, replicate)``. The design is
    standardized unless ``standardized`` is False, in which case the raw draw
    (unit population variances) is kept. ``f_star = X beta* + c (x_1^2 - 1)``
    with ``x_1`` the first raw column and ``c = config.misspec``;
    ``y = f_star + eps`` with ``eps ~ N(0, sigma^2)``.
    """
    X = _raw_design(config, n, replicate)
    if standardized:
        design = standardize(X, config.d_sizes)
    else:
        design = GroupedDesign(X, tuple(config.d_sizes))
    beta = _beta_star(config, n, replicate)
    f_star = design.X @ beta
    if config.misspec:
        f_star = f_star + config.misspec * (X[:, 0] ** 2 - 1.0)
    eps = config.sigma * PhiloxStream(config.seed, n, replicate, STREAM_NOISE).normal(n)
    return Instance(design, f_star + eps, beta, f_star)


def _noise_gate(y, f_star, sigma) -> bool:
    """Sample variance of the noise within ``3 sigma^2 / sqrt(n)`` of ``sigma^2``."""
    eps = y - f_star
    n = eps.size
    if n < 2:
        return True
    return abs(float(np.var(eps, ddof=1)) - sigma**2) <= 3.0 * sigma**2 / math.sqrt(n)


# ---------------------------------------------------------------- reports


@dataclass
class McRow:
    n: int
    lam: float | None
    replicates: int
    converged: int
    nonconverged: int
    selection_rate: float | None = None
    mean_l1_error: float | None = None
    mean_pred_error: float | None = None
    mean_risk_gap: float | None = None
    kappa_estimate: float | None = None
    pred_bound: float | None = None
    l1_bound: float | None = None
    budget: float | None = None
    noise_gate_failures: int = 0
    dimension_ok: bool = True


CSV_COLUMNS = tuple(f.name for f in fields(McRow))


def _csv_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _json_safe(v):
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)
    if isinstance(v, dict):
        return {k: _json_safe(x) for k, x in v.items()}
    if isinstance(v, list):
        return [_json_safe(x) for x in v]
    return v


@dataclass
class McReport:
    mode: str
    config: dict[str, Any]
    seed: int
    rows: list[McRow]
    summary: dict[str, Any] = field(default_factory=dict)

    def row(self, n: int) -> McRow:
        for r in self.rows:
            if r.n == n:
                return r
        raise KeyError(n)

    def to_dict(self) -> dict[str, Any]:
        return _json_safe(
            {
                "mode": self.mode,
                "seed": self.seed,
                "config": self.config,
                "summary": self.summary,
                "rows": [asdict(r) for r in self.rows],
            }
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            w.writerow([_csv_cell(getattr(r, c)) for c in CSV_COLUMNS])
        return buf.getvalue()


def _mean(xs: Sequence[float]) -> float | None:
    return math.fsum(xs) / len(xs) if xs else None


def _loglog_slope(ns: Sequence[int], values: Sequence[float | None]) -> float | None:
    pts = [(math.log(n), math.log(v)) for n, v in zip(ns, values) if v is not None and v > 0]
    if len(pts) < 2:
        return None
    x = np.array([a for a, _ in pts])
    z = np.array([b for _, b in pts])
    return float(np.polyfit(x, z, 1)[0])


def _threads() -> int:
    env = os.environ.get("GRPLQ_THREADS")
    cap = os.cpu_count() or 1
    if env:
        try:
            cap = max(1, int(env))
        except ValueError:
            raise ValueError(f"GRPLQ_THREADS must be a positive integer, got {env!r}") from None
    return cap


def _map(func: Callable, tasks: list) -> list:
    """Run ``func`` over ``tasks`` and return results in task order."""
    workers = min(_threads(), len(tasks)) or 1
    if workers == 1:
        return [func(t) for t in tasks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, tasks))


# ---------------------------------------------------------------- linear-model harnesses


def _linear_replicate(config: ExperimentConfig, n: int, rep: int, lam: float) -> dict:
    inst = gen_instance(config, n, rep)
    spec = PenaltySpec(config.q_value, lam)
    res = fit(inst.design, inst.y, spec, config.solver_options())
    out = {"converged": res.converged, "gate": _noise_gate(inst.y, inst.f_star, config.sigma)}
    if res.converged:
        diff = res.beta - inst.beta_star
        true_support = active_set(inst.design, inst.beta_star)
        out["selected"] = active_set(inst.design, res.beta, config.active_tol) == true_support
        out["l1"] = float(np.sum(np.abs(diff)))
        fitted = inst.design.X @ diff
        out["pred"] = float(fitted @ fitted) / n
    return out


def _run_linear(config: ExperimentConfig, mode: str) -> McReport:
    config.check()
    q = config.q_value
    tasks = []
    lams = {}
    for n in config.n_grid:
        lams[n] = lambda_schedule(config.A, config.sigma, config.m, n).lam
        tasks += [(n, rep) for rep in range(config.replicates)]
    results = _map(lambda t: _linear_replicate(config, t[0], t[1], lams[t[0]]), tasks)
    by_n: dict[int, list[dict]] = {n: [] for n in config.n_grid}
    for (n, _), r in zip(tasks, results):
        by_n[n].append(r)

    rows = []
    for n in config.n_grid:
        rs = by_n[n]
        ok = [r for r in rs if r["converged"]]
        row = McRow(
            n=n,
            lam=lams[n],
            replicates=len(rs),
            converged=len(ok),
            nonconverged=len(rs) - len(ok),
            selection_rate=_mean([1.0 if r["selected"] else 0.0 for r in ok]),
            mean_l1_error=_mean([r["l1"] for r in ok]),
            mean_pred_error=_mean([r["pred"] for r in ok]),
            noise_gate_failures=sum(not r["gate"] for r in rs),
            dimension_ok=math.log(config.m) <= n**config.xi,
        )
        if mode == "rates" and config.s > 0:
            design0 = gen_instance(config, n, 0).design
            kappa = restricted_eigenvalue(
                design0, config.s, 3.0, q, budget=config.kappa_budget,
                starts=2, max_steps=100, seed=config.seed,
            ).value
            row.kappa_estimate = kappa
            if kappa > 0:
                d_bar = max(config.d_sizes)
                bounds = rate_bounds(config.A, config.sigma, kappa, config.s, d_bar, config.m, n)
                row.pred_bound, row.l1_bound = bounds.prediction, bounds.l1
        rows.append(row)

    summary: dict[str, Any] = {"active_tol": config.active_tol}
    if mode == "rates":
        ns = [r.n for r in rows]
        summary["l1_slope"] = _loglog_slope(ns, [r.mean_l1_error for r in rows])
        summary["pred_slope"] = _loglog_slope(ns, [r.mean_pred_error for r in rows])
        summary["kappa_note"] = "heuristic upper bound from replicate 0 of each n"
    return McReport(mode, config.to_dict(), config.seed, rows, summary)


def run_selection(config: ExperimentConfig) -> McReport:
    """Exact support recovery rate per ``n`` at ``lam = A sigma sqrt(log m / n)``."""
    return _run_linear(config, "selection")


def run_rates(config: ExperimentConfig) -> McReport:
    """Mean l1 and prediction errors per ``n``, with bounds from a kappa estimate and log-log slopes."""
    return _run_linear(config, "rates")


# ---------------------------------------------------------------- persistency


def population_covariance(config: ExperimentConfig) -> NDArray[np.float64]:
    m = config.m
    if config.design_kind == "gaussian-iid":
        return np.eye(m)
    if config.design_kind == "equicorrelated":
        return (1.0 - config.rho) * np.eye(m) + config.rho * np.ones((m, m))
    raise ValueError("persistency needs a design with known population covariance")


def budget_for(config: ExperimentConfig, n: int) -> float:
    """``L_n = ln_c (n / log n)^ln_exponent`` (zero for ``n < 2``)."""
    if n < 2:
        return 0.0
    return config.ln_c * (n / math.log(n)) ** config.ln_exponent


def _excess(beta, beta_star, Sigma) -> float:
    d = beta - beta_star
    return float(d @ Sigma @ d)


def run_persistency(config: ExperimentConfig) -> McReport:
    """Mean excess risk ``R(beta_hat) - R(beta_B)`` per ``n``.

    ``beta_hat`` is the least-squares fit constrained to the penalty ball of
    radius ``L_n``; ``beta_B`` minimises the population risk over that ball.
    The regression function is linear plus ``c (x_1^2 - 1)``, which is
    uncorrelated with every ``x_k`` under a centred Gaussian design, so
    ``R(beta) = (beta - beta*)^T Sigma (beta - beta*) + 2 c^2 + sigma^2``.
    ``beta_B`` is therefore the constrained fit on the pseudo-design
    ``sqrt(m) U`` with response ``sqrt(m) U beta*`` (``Sigma = U^T U``), which
    reproduces the population risk up to the constant. ``beta*`` is the same
    for every ``n`` and replicate.
    """
    config.check()
    Sigma = population_covariance(config)
    q = config.q_value
    opts = config.solver_options()
    beta_star = _beta_star(config, 0, 0)
    m = config.m
    U = np.linalg.cholesky(Sigma).T
    pop = GroupedDesign(math.sqrt(m) * U, tuple(config.d_sizes))
    y_pop = pop.X @ beta_star

    budgets = {n: budget_for(config, n) for n in config.n_grid}
    best = {}
    for n, L in budgets.items():
        best[n] = np.zeros(m) if L == 0 else fit_constrained(pop, y_pop, q, L, opts).beta

    def one(task):
        n, rep = task
        X = _raw_design(config, n, rep)
        design = GroupedDesign(X, tuple(config.d_sizes))
        f_star = X @ beta_star
        if config.misspec:
            f_star = f_star + config.misspec * (X[:, 0] ** 2 - 1.0)
        y = f_star + config.sigma * PhiloxStream(config.seed, n, rep, STREAM_NOISE).normal(n)
        out = {"gate": _noise_gate(y, f_star, config.sigma)}
        L = budgets[n]
        if L == 0:
            out.update(converged=True, gap=0.0)
            return out
        try:
            res = fit_constrained(design, y, q, L, opts)
        except BracketError:
            out["converged"] = False
            return out
        out["converged"] = res.converged
        out["gap"] = _excess(res.beta, beta_star, Sigma) - _excess(best[n], beta_star, Sigma)
        return out

    tasks = [(n, rep) for n in config.n_grid for rep in range(config.replicates)]
    results = _map(one, tasks)
    rows = []
    for n in config.n_grid:
        rs = [r for (nn, _), r in zip(tasks, results) if nn == n]
        ok = [r for r in rs if r["converged"]]
        rows.append(
            McRow(
                n=n,
                lam=None,
                replicates=len(rs),
                converged=len(ok),
                nonconverged=len(rs) - len(ok),
                mean_risk_gap=_mean([r["gap"] for r in ok]),
                budget=budgets[n],
                noise_gate_failures=sum(not r["gate"] for r in rs),
                dimension_ok=math.log(m) <= n**config.xi,
            )
        )
    summary = {
        "population_fit": "exact, from the known second moments",
        "risk_constant": 2.0 * config.misspec**2 + config.sigma**2,
        "beta_star_penalty": penalty_value(beta_star, PenaltySpec(q), pop),
    }
    return McReport("persistency", config.to_dict(), config.seed, rows, summary)


def run_experiment(config: ExperimentConfig, mode: str) -> McReport:
    runners = {"selection": run_selection, "rates": run_rates, "persistency": run_persistency}
    if mode not in runners:
        raise ValueError(f"mode must be one of {', '.join(MODES)}, got {mode!r}")
    return runners[mode](config)


# ---------------------------------------------------------------- multi-response reduction


def _responses(Ys, n: int) -> NDArray[np.float64]:
    if isinstance(Ys, np.ndarray) and Ys.ndim == 2:
        Y = np.asarray(Ys, dtype=float)
    else:
        cols = [np.asarray(y, dtype=float).ravel() for y in Ys]
        lengths = sorted({c.size for c in cols})
        if len(lengths) != 1:
            raise ValueError(f"responses have different lengths: {lengths}")
        Y = np.column_stack(cols)
    if Y.shape[0] != n:
        raise ValueError(f"responses have length {Y.shape[0]}, design has {n} rows")
    if Y.shape[1] < 1:
        raise ValueError("need at least one response")
    return Y


def simlasso_reduce(X: ArrayLike, Ys) -> tuple[GroupedDesign, NDArray[np.float64]]:
    """Stack a multi-response problem into one grouped problem.

    With ``k`` responses the stacked design is ``sqrt(k) (I_k kron X)`` with
    columns ordered so that group ``j`` holds coefficient ``j`` of every
    response; the stacked response is ``sqrt(k)`` times the concatenated
    responses. The ``sqrt(k)`` factor makes the ``1 / (2 n k)`` loss of the
    stacked problem equal the ``1 / (2 n)`` multi-response loss and keeps
    standardized columns standardized. Solving it with ``q = inf`` at
    ``lam / k`` solves the multi-response problem at ``lam``.

    ``Ys`` is an ``n x k`` array or a sequence of ``k`` length-``n`` vectors.
    The coefficient vector of the stacked problem is ``B.ravel()`` for the
    ``p x k`` coefficient matrix ``B``.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError(f"design must be 2-d, got shape {X.shape}")
    n, p = X.shape
    Y = _responses(Ys, n)
    k = Y.shape[1]
    root = math.sqrt(k)
    Xt = np.zeros((n * k, p * k))
    for r in range(k):
        Xt[r * n : (r + 1) * n, r::k] = root * X
    yt = root * Y.T.ravel()
    return GroupedDesign(Xt, (k,) * p), yt


def simlasso_objective(X: ArrayLike, Ys, B: ArrayLike, lam: float) -> float:
    """``(1/2n) sum_k ||Y_k - X B_k||^2 + lam sum_j max_k |B_jk|`` for ``p x k`` matrix ``B``."""
    X = np.asarray(X, dtype=float)
    Y = _responses(Ys, X.shape[0])
    B = np.asarray(B, dtype=float).reshape(X.shape[1], Y.shape[1])
    R = Y - X @ B
    return float(np.sum(R * R)) / (2.0 * X.shape[0]) + lam * float(np.sum(np.max(np.abs(B), axis=1)))


def stacked_objective(design: GroupedDesign, y: ArrayLike, beta: ArrayLike, lam: float) -> float:
    """Objective of the stacked problem with ``q = inf`` at ``lam / k``."""
    k = design.d_bar
    return objective(design, y, beta, PenaltySpec(math.inf, lam / k))


def simlasso_fit(X: ArrayLike, Ys, lam: float, opts: SolverOptions | None = None):
    """Solve the multi-response problem; returns ``(B, FitResult)`` with ``B`` of shape ``p x k``."""
    design, y = simlasso_reduce(X, Ys)
    k = design.d_bar
    res = fit(design, y, PenaltySpec(math.inf, lam / k), opts)
    return res.beta.reshape(design.p, k), res
