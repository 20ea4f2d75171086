"""Command-line interface: ``grplq {fit,path,diagnose,certify,experiment,simlasso}``.

Exit codes: 0 success, 1 usage or input error, 2 non-convergence (or a
coefficient vector that fails certification), 3 diagnostic infeasibility.
File formats are described in ``docs/FORMATS.md``.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import re
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .certify import NotOptimalError, kkt_check, reduce_to_compact
from .diagnostics import SingularGramError, Thresholds, selection_verdict
from .experiments import MODES, ExperimentConfig, run_experiment, simlasso_fit, simlasso_reduce
from .experiments import simlasso_objective, stacked_objective
from .model import DesignError, GroupedDesign, PenaltySpec, objective, parse_q, standardize
from .solver import SolverOptions, default_lambda_grid, fit, fit_path

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NONCONVERGED = 2
EXIT_INFEASIBLE = 3

_NUMBER = re.compile(r"^[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?$")


class InputError(Exception):
    """Bad input file or flag value; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------- file I/O


def _read_bytes(path: str) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None


def parse_csv(text: str, name: str = "csv") -> np.ndarray:
    """Parse a headerless numeric CSV into a 2-d float array.

    Fields are plain decimal numbers (optional sign, digits, optional
    fraction and exponent) with surrounding spaces allowed. Ragged rows,
    empty fields and anything else raise ``InputError`` with the 1-based
    row and column.
    """
    lines = text.splitlines()
    while lines and not lines[-1].strip():
        lines.pop()
    if not lines:
        raise InputError(f"{name}: file is empty")
    rows = []
    width = None
    for i, line in enumerate(lines, start=1):
        cells = line.split(",")
        if width is None:
            width = len(cells)
        elif len(cells) != width:
            raise InputError(f"{name}: row {i} has {len(cells)} fields, expected {width}")
        vals = []
        for j, cell in enumerate(cells, start=1):
            token = cell.strip()
            if not _NUMBER.match(token):
                raise InputError(f"{name}: row {i}, column {j}: not a number: {token!r}")
            vals.append(float(token))
        rows.append(vals)
    return np.array(rows, dtype=float)


def format_csv(A) -> str:
    """Headerless CSV with shortest round-trip decimal encoding."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    return "".join(",".join(repr(float(v)) for v in row) + "\n" for row in A)


def _vector(A: np.ndarray, name: str) -> np.ndarray:
    if A.shape[1] == 1:
        return A[:, 0]
    if A.shape[0] == 1:
        return A[0]
    raise InputError(f"{name}: expected a single column, got shape {A.shape[0]}x{A.shape[1]}")


def _parse_json(raw: bytes, name: str):
    try:
        return json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise InputError(f"{name}: invalid JSON: {exc}") from None


def parse_groups(data, m: int | None = None) -> list[int]:
    if not isinstance(data, dict) or "sizes" not in data:
        raise InputError('groups: expected an object {"sizes": [...]}')
    sizes = data["sizes"]
    if not isinstance(sizes, list) or not sizes or any(
        not isinstance(d, int) or isinstance(d, bool) or d < 1 for d in sizes
    ):
        raise InputError("groups: sizes must be a nonempty list of positive integers")
    if m is not None and sum(sizes) != m:
        raise InputError(f"groups: sizes sum to {sum(sizes)} but the design has {m} columns")
    return sizes


def _q(value: str) -> float:
    try:
        return parse_q(value)
    except ValueError as exc:
        raise InputError(f"--q: {exc}") from None


def _write(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _json_text(obj) -> str:
    def clean(v):
        if isinstance(v, float) and not math.isfinite(v):
            return repr(v)
        if isinstance(v, dict):
            return {k: clean(x) for k, x in v.items()}
        if isinstance(v, (list, tuple)):
            return [clean(x) for x in v]
        if isinstance(v, np.generic):
            return clean(v.item())
        return v

    return json.dumps(clean(obj), indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------- manifest


@dataclass
class RunManifest:
    command: str
    inputs: dict[str, dict[str, str]] = field(default_factory=dict)
    config: dict[str, Any] = field(default_factory=dict)
    version: str = __version__
    seed: int | None = None
    duration_seconds: float = 0.0

    def add_input(self, role: str, path: str, data: bytes) -> None:
        self.inputs[role] = {"path": path, "sha256": hashlib.sha256(data).hexdigest()}


class _Session:
    """Loads inputs, records their digests and times the command."""

    def __init__(self, args: argparse.Namespace):
        config = {k: v for k, v in vars(args).items() if k != "handler"}
        self.manifest = RunManifest(args.command, config=config)
        self.start = time.perf_counter()

    def raw(self, role: str, path: str) -> bytes:
        data = _read_bytes(path)
        self.manifest.add_input(role, path, data)
        return data

    def matrix(self, role: str, path: str) -> np.ndarray:
        return parse_csv(self.raw(role, path).decode("utf-8", errors="replace"), role)

    def finish(self) -> dict:
        self.manifest.duration_seconds = time.perf_counter() - self.start
        return asdict(self.manifest)


def _design(sess: _Session, args, require_y: bool = True):
    X = sess.matrix("x", args.x)
    sizes = parse_groups(_parse_json(sess.raw("groups", args.groups), "groups"), X.shape[1])
    try:
        design = standardize(X, sizes) if args.standardize else GroupedDesign(X, sizes)
    except DesignError as exc:
        raise InputError(f"x: {exc}") from None
    if not require_y:
        return design, None
    y = _vector(sess.matrix("y", args.y), "y")
    if y.size != design.n:
        raise InputError(f"y has {y.size} entries but x has {design.n} rows")
    return design, y


def _opts(args) -> SolverOptions:
    try:
        return SolverOptions(tol=args.tol, max_iter=args.max_iter)
    except ValueError as exc:
        raise InputError(str(exc)) from None


def _lambda(value: float) -> float:
    if not (value >= 0 and math.isfinite(value)):
        raise InputError(f"--lambda must be finite and nonnegative, got {value}")
    return value


# ---------------------------------------------------------------- commands


def cmd_fit(args) -> int:
    sess = _Session(args)
    design, y = _design(sess, args)
    spec = PenaltySpec(_q(args.q), _lambda(args.lam))
    res = fit(design, y, spec, _opts(args))
    cert = kkt_check(design, y, res.beta, spec, args.tol)
    out = {"fit": res.to_dict(), "certificate": cert.to_dict()}
    if args.standardize:
        out["beta_original_scale"] = [float(v) for v in design.to_original(res.beta)]
    out["manifest"] = sess.finish()
    _write(args.out, _json_text(out))
    return EXIT_OK if res.converged else EXIT_NONCONVERGED


def _parse_grid(text: str) -> list[float]:
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise InputError(f"--lambda-grid: not a comma-separated list of numbers: {text!r}") from None
    if not vals:
        raise InputError("--lambda-grid is empty")
    return vals


def cmd_path(args) -> int:
    sess = _Session(args)
    design, y = _design(sess, args)
    q = _q(args.q)
    if args.lambda_grid is not None:
        grid = _parse_grid(args.lambda_grid)
    else:
        if args.grid_size < 1 or not 0 < args.grid_min_ratio <= 1:
            raise InputError("--grid-size must be >= 1 and --grid-min-ratio in (0, 1]")
        grid = list(default_lambda_grid(design, y, q, args.grid_size, args.grid_min_ratio))
    try:
        path = fit_path(design, y, q, grid, _opts(args))
    except ValueError as exc:
        raise InputError(str(exc)) from None
    out = {"path": path.to_dict(), "manifest": sess.finish()}
    _write(args.out, _json_text(out))
    if args.csv:
        lines = ["lambda,objective,kkt_residual,converged,active_groups\n"]
        for f in path.fits:
            lines.append(
                f"{f.lam!r},{f.objective!r},{f.kkt_residual!r},"
                f"{'true' if f.converged else 'false'},{len(f.active_set)}\n"
            )
        Path(args.csv).write_text("".join(lines), encoding="utf-8")
    return EXIT_OK if all(f.converged for f in path.fits) else EXIT_NONCONVERGED


def cmd_diagnose(args) -> int:
    sess = _Session(args)
    design, _ = _design(sess, args, require_y=False)
    q = _q(args.q)
    support = beta_star = None
    if args.support is not None:
        text = args.support
        raw = text.encode() if text.lstrip().startswith("[") else sess.raw("support", text)
        support = _parse_json(raw, "support")
        if not isinstance(support, list) or any(not isinstance(j, int) for j in support):
            raise InputError("support: expected a JSON list of group indices")
    if args.beta_star is not None:
        beta_star = _vector(sess.matrix("beta_star", args.beta_star), "beta_star")
        if beta_star.size != design.m:
            raise InputError(f"beta_star has {beta_star.size} entries, design has {design.m} columns")
    if support is None and beta_star is None:
        raise InputError("need --support or --beta-star")
    if args.lam is None and (args.A is None or args.sigma is None):
        raise InputError("need --lambda, or both --A and --sigma")
    thresholds = Thresholds(
        c_min=args.c_min_threshold,
        lambda_rate=args.lambda_rate_threshold,
        rho_condition=args.rho_threshold,
    )
    try:
        report = selection_verdict(
            design, q, lam=args.lam, beta_star=beta_star, support=support,
            sigma=args.sigma, A=args.A, thresholds=thresholds,
            kappa_budget=args.kappa_budget,
        )
    except SingularGramError as exc:
        out = {"error": str(exc), "c_min": exc.c_min, "manifest": sess.finish()}
        _write(args.out, _json_text(out))
        print(f"grplq diagnose: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ValueError as exc:
        raise InputError(str(exc)) from None
    out = {"report": report.to_dict(), "manifest": sess.finish()}
    _write(args.out, _json_text(out))
    return EXIT_OK


def _read_beta(sess: _Session, path: str, m: int) -> np.ndarray:
    raw = sess.raw("beta", path)
    if path.endswith(".json"):
        data = _parse_json(raw, "beta")
        try:
            beta = np.asarray(data["fit"]["beta"] if "fit" in data else data["beta"], dtype=float)
        except (KeyError, TypeError, ValueError):
            raise InputError('beta: JSON must hold "beta" or "fit.beta" as a list of numbers') from None
    else:
        beta = _vector(parse_csv(raw.decode("utf-8", errors="replace"), "beta"), "beta")
    if beta.ndim != 1 or beta.size != m:
        raise InputError(f"beta has {beta.size} entries, design has {m} columns")
    return beta


def cmd_certify(args) -> int:
    sess = _Session(args)
    design, y = _design(sess, args)
    spec = PenaltySpec(_q(args.q), _lambda(args.lam))
    beta = _read_beta(sess, args.beta, design.m)
    cert = kkt_check(design, y, beta, spec, args.tol)
    out: dict[str, Any] = {"certificate": cert.to_dict(), "objective": objective(design, y, beta, spec)}
    code = EXIT_OK if cert.optimal else EXIT_NONCONVERGED
    if args.reduce and cert.optimal:
        try:
            reduced = reduce_to_compact(design, y, beta, spec, args.tol)
        except NotOptimalError as exc:
            raise InputError(str(exc)) from None
        rcert = kkt_check(design, y, reduced, spec, args.tol)
        out["reduced"] = {
            "beta": [float(v) for v in reduced],
            "objective": objective(design, y, reduced, spec),
            "active_set": [j for j, b in enumerate(design.split(reduced)) if np.any(b != 0)],
            "certificate": rcert.to_dict(),
        }
    out["manifest"] = sess.finish()
    _write(args.out, _json_text(out))
    return code


def cmd_experiment(args) -> int:
    sess = _Session(args)
    data = _parse_json(sess.raw("config", args.config), "config")
    if not isinstance(data, dict):
        raise InputError("config: expected a JSON object")
    try:
        config = ExperimentConfig.from_dict(data)
    except (TypeError, ValueError) as exc:
        raise InputError(f"config: {exc}") from None
    bad = config.validate()
    if bad:
        raise InputError("invalid config:\n  " + "\n  ".join(bad))
    sess.manifest.seed = config.seed
    sess.manifest.config["resolved"] = config.to_dict()
    try:
        report = run_experiment(config, args.mode)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    out = {"report": report.to_dict(), "manifest": sess.finish()}
    _write(args.out, _json_text(out))
    if args.csv:
        Path(args.csv).write_text(report.to_csv(), encoding="utf-8")
    nonconverged = sum(r.nonconverged for r in report.rows)
    return EXIT_OK if nonconverged == 0 else EXIT_NONCONVERGED


def cmd_simlasso(args) -> int:
    sess = _Session(args)
    X = sess.matrix("x", args.x)
    Y = sess.matrix("ys", args.ys)
    if Y.shape[0] != X.shape[0]:
        raise InputError(f"ys has {Y.shape[0]} rows but x has {X.shape[0]}")
    lam = _lambda(args.lam)
    B, res = simlasso_fit(X, Y, lam, _opts(args))
    design, y = simlasso_reduce(X, Y)
    out = {
        "coefficients": B.tolist(),
        "shape": list(B.shape),
        "lambda": lam,
        "stacked_lambda": lam / Y.shape[1],
        "objective": simlasso_objective(X, Y, B, lam),
        "stacked_objective": stacked_objective(design, y, res.beta, lam),
        "converged": res.converged,
        "iterations": res.iterations,
        "kkt_residual": res.kkt_residual,
        "manifest": sess.finish(),
    }
    _write(args.out, _json_text(out))
    if args.csv:
        Path(args.csv).write_text(format_csv(B), encoding="utf-8")
    return EXIT_OK if res.converged else EXIT_NONCONVERGED


# ---------------------------------------------------------------- parser


def _solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tol", type=float, default=1e-8, help="KKT tolerance (default 1e-8)")
    p.add_argument("--max-iter", type=int, default=10000, help="maximum sweeps (default 10000)")


def _data_flags(p: argparse.ArgumentParser, y: bool = True) -> None:
    p.add_argument("--x", required=True, help="design matrix, headerless CSV")
    if y:
        p.add_argument("--y", required=True, help="response, one-column headerless CSV")
    p.add_argument("--groups", required=True, help='JSON file {"sizes": [d_1, ...]}')
    p.add_argument("--q", required=True, help='"1", "2", "inf" or a decimal >= 1')
    p.add_argument("--standardize", action="store_true", help="scale columns to (1/n)||x||^2 = 1")
    p.add_argument("--out", help="output JSON path (default stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="grplq", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"grplq {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="fit at one lambda")
    _data_flags(p)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    _solver_flags(p)
    p.set_defaults(handler=cmd_fit)

    p = sub.add_parser("path", help="warm-started fits over a decreasing lambda grid")
    _data_flags(p)
    p.add_argument("--lambda-grid", help="comma-separated strictly decreasing lambdas")
    p.add_argument("--grid-size", type=int, default=50)
    p.add_argument("--grid-min-ratio", type=float, default=1e-3)
    p.add_argument("--csv", help="per-lambda summary CSV")
    _solver_flags(p)
    p.set_defaults(handler=cmd_path)

    p = sub.add_parser("diagnose", help="selection-consistency conditions for a support")
    _data_flags(p, y=False)
    p.add_argument("--support", help="JSON list of group indices, inline or a file path")
    p.add_argument("--beta-star", help="true coefficients, one-column CSV")
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--sigma", type=float)
    p.add_argument("--A", type=float)
    p.add_argument("--kappa-budget", type=int, default=0, help="subsets for a kappa estimate (0 skips)")
    p.add_argument("--c-min-threshold", type=float, default=Thresholds.c_min)
    p.add_argument("--lambda-rate-threshold", type=float, default=Thresholds.lambda_rate)
    p.add_argument("--rho-threshold", type=float, default=Thresholds.rho_condition)
    p.set_defaults(handler=cmd_diagnose)

    p = sub.add_parser("certify", help="check a coefficient vector for optimality")
    _data_flags(p)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--beta", required=True, help="one-column CSV, or a fit output JSON")
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--reduce", action="store_true", help="also reduce to at most n active groups")
    p.set_defaults(handler=cmd_certify)

    p = sub.add_parser("experiment", help="Monte Carlo harness")
    p.add_argument("--config", required=True, help="ExperimentConfig JSON")
    p.add_argument("--mode", required=True, choices=MODES)
    p.add_argument("--out", help="report JSON path (default stdout)")
    p.add_argument("--csv", help="per-n rows as CSV")
    p.set_defaults(handler=cmd_experiment)

    p = sub.add_parser("simlasso", help="multi-response fit with a shared row-sparsity penalty")
    p.add_argument("--x", required=True)
    p.add_argument("--ys", required=True, help="responses, one column per response")
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--out", help="output JSON path (default stdout)")
    p.add_argument("--csv", help="p x k coefficient matrix CSV")
    _solver_flags(p)
    p.set_defaults(handler=cmd_simlasso)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except InputError as exc:
        print(f"grplq {args.command}: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
