"""Command line front end: ``occinv {gen,solve,check,bound,sweep,stats}``."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .bench import (
    PROBLEM_IDS,
    BenchmarkProblem,
    ExternalDataRequired,
    estimation_error,
    lambda_sweep,
    make_problem,
    write_sweep_csv,
)
from .direct import DirectProblem, SolverFailure, complementarity_residuals, hjb_bound
from .iocp import (
    IocpConfig,
    IocpError,
    check_membership,
    coefficient_rows,
    default_lambda_grid,
    solve_iocp,
)
from .occupation import DatasetError, load_dataset, save_dataset
from .polynomials import Polynomial, default_names
from .semialgebraic import RegionError
from .stats import BoundError, bound_report, estimate_constants

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2


class UsageError(Exception):
    pass


# -- schemas --------------------------------------------------------------------------

_POLY = {
    "type": "object",
    "required": ["nvars", "terms"],
    "properties": {
        "nvars": {"type": "integer", "minimum": 0},
        "terms": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["exps", "coef"],
                "properties": {
                    "exps": {"type": "array", "items": {"type": "integer", "minimum": 0}},
                    "coef": {"type": "number"},
                },
            },
        },
    },
}

_SET = {
    "type": "object",
    "required": ["nvars"],
    "properties": {
        "nvars": {"type": "integer", "minimum": 1},
        "shape": {"type": ["object", "null"]},
        "ineqs": {"type": "array", "items": _POLY},
        "eqs": {"type": "array", "items": _POLY},
        "archimedean": {"type": "boolean"},
    },
}

PROBLEM_SCHEMA = {
    "type": "object",
    "required": ["f", "X", "U", "X_T"],
    "properties": {
        "f": {"type": "array", "items": _POLY, "minItems": 1},
        "X": _SET,
        "U": _SET,
        "X_T": _SET,
        "T_M": {"type": "number", "exclusiveMinimum": 0},
        "l0": _POLY,
    },
}

_ENVELOPE = {"version": {"type": "string"}, "config": {"type": "object"}}

REPORT_SCHEMAS = {
    "solve": {
        "type": "object",
        "required": ["version", "config", "lambda", "epsilon", "l", "v", "residuals", "solver"],
        "properties": {**_ENVELOPE, "lambda": {"type": "number"}, "epsilon": {"type": "number"},
                       "l": _POLY, "v": _POLY, "residuals": {"type": "object"},
                       "solver": {"type": "object"}},
    },
    "check": {
        "type": "object",
        "required": ["version", "config", "feasible", "epsilon", "eps_min", "status"],
        "properties": {**_ENVELOPE, "feasible": {"type": "boolean"}, "epsilon": {"type": "number"},
                       "status": {"type": "string"}},
    },
    "bound": {
        "type": "object",
        "required": ["version", "config", "z", "k", "bound", "w", "residuals"],
        "properties": {**_ENVELOPE, "z": {"type": "array", "items": {"type": "number"}},
                       "k": {"type": "integer"}, "bound": {"type": "number"}, "w": {"type": "number"},
                       "residuals": {"type": "object"}},
    },
    "stats": {
        "type": "object",
        "required": ["version", "config", "d", "M", "K1", "K2", "table"],
        "properties": {
            **_ENVELOPE,
            "d": {"type": "integer"},
            "M": {"type": "object", "required": ["M_inf", "M_c", "M_v"]},
            "K1": {"type": "number", "exclusiveMinimum": 0},
            "K2": {"type": "number", "exclusiveMinimum": 0},
            "table": {
                "type": "array",
                "items": {"type": "object", "required": ["n", "delta", "eps_prime"]},
            },
        },
    },
    "gen": {
        "type": "object",
        "required": ["version", "config", "n", "path"],
        "properties": {**_ENVELOPE, "n": {"type": "integer", "minimum": 1}, "path": {"type": "string"}},
    },
    "sweep": {
        "type": "object",
        "required": ["version", "config", "rows"],
        "properties": {**_ENVELOPE, "rows": {"type": "array"}},
    },
}


def _validate(doc: dict, schema: dict, what: str) -> None:
    errors = sorted(jsonschema.Draft7Validator(schema).iter_errors(doc), key=lambda e: list(e.path))
    if errors:
        msgs = [f"{what}: {'/'.join(map(str, e.path)) or '<root>'}: {e.message}" for e in errors[:5]]
        raise UsageError("\n".join(msgs))


def _json_safe(obj):
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if np.isfinite(f) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def _emit(doc: dict, kind: str, out: Path | None) -> dict:
    doc = _json_safe(doc)
    _validate(doc, REPORT_SCHEMAS[kind], f"{kind} report")
    text = json.dumps(doc, indent=2) + "\n"
    if out is None:
        sys.stdout.write(text)
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)
    return doc


# -- problem and data resolution ---------------------------------------------------------

def _load_problem(args) -> tuple[DirectProblem, Polynomial | None, BenchmarkProblem | None]:
    if args.problem_file:
        path = Path(args.problem_file)
        try:
            data = json.loads(path.read_text())
        except OSError as exc:
            raise UsageError(f"cannot read {path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise UsageError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
        _validate(data, PROBLEM_SCHEMA, str(path))
        try:
            prob = DirectProblem.from_json(data)
        except (ValueError, KeyError) as exc:
            raise UsageError(f"{path}: {exc}") from None
        l0 = Polynomial.from_json(data["l0"]) if "l0" in data else None
        return prob, l0, None
    if not args.problem:
        raise UsageError("either --problem or --problem-file is required")
    bp = make_problem(args.problem, getattr(args, "data", None))
    return bp.problem, bp.l0, bp


def _load_data(args, prob: DirectProblem, bp: BenchmarkProblem | None):
    if getattr(args, "data", None):
        return load_dataset(args.data, prob.X, prob.U, prob.X_T)
    if bp is None:
        raise UsageError("--data is required with --problem-file")
    return bp.generate(args.n, args.seed, args.mode)


def _parse_poly(text: str, prob: DirectProblem, state_only: bool = False) -> Polynomial:
    """Polynomial from text like ``1.0 * x1^2 - u1`` or from a JSON file."""
    nvars = prob.dx if state_only else prob.nvars
    path = Path(text)
    try:
        if text.endswith(".json") and path.exists():
            p = Polynomial.from_json(json.loads(path.read_text()))
        else:
            p = Polynomial.from_text(text, default_names(nvars, prob.dx))
    except (ValueError, KeyError) as exc:
        raise UsageError(f"cannot parse polynomial {text!r}: {exc}") from None
    if p.nvars != nvars:
        raise UsageError(f"polynomial has {p.nvars} variables, expected {nvars}")
    return p


def _parse_floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"expected a comma separated list of numbers, got {text!r}") from None


def _config(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k != "func"}


def _iocp_config(args, lam: float) -> IocpConfig:
    return IocpConfig(deg_l=args.deg_l, deg_v=args.deg_v, k=args.k, lam=lam, terminal=args.terminal,
                      normalize=not args.no_normalize)


# -- subcommands ------------------------------------------------------------------------

def cmd_gen(args) -> int:
    prob, _, bp = _load_problem(args)
    if bp is None:
        raise UsageError("gen needs a built-in --problem")
    D = bp.generate(args.n, args.seed, args.mode)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_dataset(D, out)
    _emit({"version": __version__, "config": _config(args), "n": D.n, "path": str(out)}, "gen",
          Path(args.report) if args.report else None)
    return EXIT_OK


def cmd_solve(args) -> int:
    prob, l0, bp = _load_problem(args)
    D = _load_data(args, prob, bp)
    sol = solve_iocp(prob, D, _iocp_config(args, args.lam))
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    doc = {"version": __version__, "config": _config(args), **sol.to_json()}
    if l0 is not None:
        doc["est_error"] = estimation_error(l0, sol.l) if sol.l.norm2() > 1e-12 else None
    _emit(doc, "solve", out_dir / "solution.json")
    with (out_dir / "coefficients.csv").open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["poly", "exponents", "coef"])
        w.writeheader()
        for row in coefficient_rows(sol.l, "l") + coefficient_rows(sol.v, "v"):
            w.writerow({**row, "coef": repr(row["coef"])})
    return EXIT_OK


def cmd_check(args) -> int:
    prob, l0, bp = _load_problem(args)
    D = _load_data(args, prob, bp)
    if args.l:
        l = _parse_poly(args.l, prob)
    elif l0 is not None:
        l = l0
    else:
        raise UsageError("--l is required when the problem has no reference Lagrangian")
    v = _parse_poly(args.v, prob, state_only=True) if args.v else None
    res = check_membership(l, D, args.eps, args.k, prob, variant=args.variant,
                           normalize=not args.no_normalize, terminal=args.terminal, v=v)
    doc = {"version": __version__, "config": _config(args), "l": l.to_json(), **res.to_json()}
    _emit(doc, "check", Path(args.out) if args.out else None)
    if res.status == "numerical_limit":
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_bound(args) -> int:
    prob, l0, bp = _load_problem(args)
    l = _parse_poly(args.l, prob) if args.l else l0
    if l is None:
        raise UsageError("--l is required when the problem has no reference Lagrangian")
    z = _parse_floats(args.z) if args.z else [0.0] * prob.dx
    if len(z) != prob.dx:
        raise UsageError(f"--z needs {prob.dx} coordinates")
    cert = hjb_bound(l, z, prob, args.k, with_w=not args.no_w)
    residuals = {"certificates": {name: r.to_json() for name, r in cert.reports.items()}}
    if getattr(args, "data", None) or (bp is not None and bp.law is not None):
        D = _load_data(args, prob, bp)
        r1, r2, r3 = complementarity_residuals(l, cert, D, prob.f, T_M=prob.T_M)
        residuals.update({"r1": r1, "r2": r2, "r3": r3})
    doc = {"version": __version__, "config": _config(args), "z": z, "k": args.k, "bound": cert.bound,
           "w": cert.w, "v": cert.v.to_json(), "residuals": residuals, "solver": cert.solver}
    _emit(doc, "bound", Path(args.out) if args.out else None)
    return EXIT_OK


def cmd_sweep(args) -> int:
    prob, l0, bp = _load_problem(args)
    if l0 is None:
        raise UsageError("sweep needs a reference Lagrangian (built-in problem or l0 in the problem file)")
    D = _load_data(args, prob, bp)
    grid = default_lambda_grid() if args.grid == "default" else _parse_floats(args.grid)
    if not grid:
        raise UsageError("empty lambda grid")
    rows = lambda_sweep(prob, D, _iocp_config(args, 0.0), grid, l0)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_sweep_csv(rows, out)
    doc = {"version": __version__, "config": _config(args),
           "rows": [{"lambda": r.lam, "epsilon": r.epsilon, "est_error": r.est_error,
                     "time_s": r.time_s, "status": r.status, "verified": r.verified} for r in rows]}
    _emit(doc, "sweep", Path(args.report) if args.report else None)
    failed = [r for r in rows if r.status != "optimal"]
    return EXIT_NUMERICAL if failed and len(failed) == len(rows) else EXIT_OK


def cmd_stats(args) -> int:
    prob, _, _ = _load_problem(args)
    Z = prob.XU
    bound = estimate_constants(Z, None, args.d, args.budget, args.seed)
    ns = [int(x) for x in _parse_floats(args.ns)]
    deltas = _parse_floats(args.delta)
    doc = {"version": __version__, "config": _config(args), **bound_report(bound, args.eps, ns, deltas)}
    _emit(doc, "stats", Path(args.out) if args.out else None)
    return EXIT_OK


# -- parser ---------------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _add_problem(p: argparse.ArgumentParser) -> None:
    g = p.add_mutually_exclusive_group()
    g.add_argument("--problem", choices=PROBLEM_IDS, help="built-in benchmark id")
    g.add_argument("--problem-file", help="problem JSON file")


def _add_data(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", help="dataset CSV (generated from the problem when omitted)")
    p.add_argument("--n", type=int, default=None, help="sample size for generated data")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", choices=["uniform_state", "time_process"], default="uniform_state")


def _add_iocp(p: argparse.ArgumentParser) -> None:
    p.add_argument("--deg-l", type=int, default=4)
    p.add_argument("--deg-v", type=int, default=10)
    p.add_argument("--k", type=int, default=None, help="cone degree (default: smallest valid)")
    p.add_argument("--terminal", default="auto",
                   choices=["auto", "value_zero_point", "variety_ideal", "putinar_pair"])
    p.add_argument("--no-normalize", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="occinv", description=__doc__)
    parser.add_argument("--version", action="version", version=f"occinv {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("gen", help="sample a dataset from a benchmark law")
    _add_problem(p)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", choices=["uniform_state", "time_process"], default="uniform_state")
    p.add_argument("--out", default="data.csv")
    p.add_argument("--report", default=None)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("solve", help="recover a Lagrangian from data")
    _add_problem(p)
    _add_data(p)
    _add_iocp(p)
    p.add_argument("--lambda", dest="lam", type=float, default=0.0)
    p.add_argument("--out-dir", default="out")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("check", help="membership test for a given Lagrangian")
    _add_problem(p)
    _add_data(p)
    p.add_argument("--l", default=None, help="polynomial text like '1.0 * x1^2 + 1.0 * u1^2' or a JSON file")
    p.add_argument("--v", default=None, help="fix the value polynomial (state variables)")
    p.add_argument("--eps", type=float, default=1e-6)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--variant", choices=["sampled", "polyIOCP"], default="sampled")
    p.add_argument("--terminal", default="auto",
                   choices=["auto", "value_zero_point", "variety_ideal", "putinar_pair"])
    p.add_argument("--no-normalize", action="store_true")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("bound", help="relaxed HJB lower bound on the value")
    _add_problem(p)
    _add_data(p)
    p.add_argument("--l", default=None)
    p.add_argument("--z", default=None, help="initial point, comma separated (default: origin)")
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--no-w", action="store_true", help="drop the horizon multiplier w")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("sweep", help="estimation error versus lambda")
    _add_problem(p)
    _add_data(p)
    _add_iocp(p)
    p.add_argument("--grid", default="default", help="'default' or comma separated lambdas")
    p.add_argument("--out", default="sweep.csv")
    p.add_argument("--report", default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("stats", help="finite-sample constants and bounds")
    _add_problem(p)
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--budget", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eps", type=float, default=0.0)
    p.add_argument("--ns", default="20,100,1000")
    p.add_argument("--delta", default="0.05")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_stats)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "func", None):
            raise UsageError("a subcommand is required: gen, solve, check, bound, sweep or stats")
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SolverFailure as exc:
        print(f"solver: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (DatasetError, RegionError, IocpError, BoundError, ExternalDataRequired, ValueError,
            OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
