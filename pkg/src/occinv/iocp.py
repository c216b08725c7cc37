"""The sampled inverse optimal control program and membership checks.

The unknowns are a Lagrangian l(x, u), a value polynomial v(x) and a scalar
epsilon.  The program asks that ``l + grad v . f`` be certified nonnegative on
X x U, has empirical mean at most epsilon on the data, satisfies a terminal
condition on X_T and integrates to one over the normalization region.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import conic
from .conic import ConicSolution, Tolerances
from .direct import PIPELINE_TOLERANCES, DirectProblem, SolverFailure
from .occupation import TrajectoryDataset, empirical_functional
from .polynomials import Polynomial, basis_eval_many, dot_dynamics
from .semialgebraic import (
    MomentVector,
    Point,
    SemialgebraicSet,
    Sphere,
    lebesgue_moments,
    product,
    sample_uniform,
)
from .soscomp import (
    AffinePolyExpr,
    CertificateReport,
    ConicProgram,
    GramCertificate,
    PolyVariable,
    PutinarHandle,
    extract_certificate,
    l1_lift,
    putinar_constrain,
    verify_certificate,
)

TERMINAL_ENCODINGS = ("value_zero_point", "variety_ideal", "putinar_pair")
VARIANTS = ("sampled", "polyIOCP")
RESIDUAL_TOL = 1e-6


class IocpError(ValueError):
    """Inconsistent configuration or unsupported terminal encoding."""


def default_lambda_grid() -> list[float]:
    return [0.0] + [float(x) for x in np.logspace(-4, 1, 11)]


@dataclass(frozen=True)
class IocpConfig:
    deg_l: int = 4
    deg_v: int = 10
    k: int | None = None
    k_terminal: int | None = None
    lam: float = 0.0
    terminal: str = "auto"
    x_tilde: SemialgebraicSet | None = None
    normalize: bool = True
    tolerances: Tolerances = PIPELINE_TOLERANCES

    def cone_degree(self, problem: DirectProblem) -> int:
        need = max(self.deg_l, self.deg_v - 1 + problem.deg_f)
        k = math.ceil(need / 2) if self.k is None else self.k
        if 2 * k < need:
            raise IocpError(f"2k = {2 * k} is below max(deg l, deg v - 1 + deg f) = {need}")
        return k

    def terminal_degree(self, problem: DirectProblem) -> int:
        k = self.cone_degree(problem) if self.k_terminal is None else self.k_terminal
        if 2 * k < self.deg_v:
            raise IocpError(f"terminal cone degree 2k = {2 * k} is below deg v = {self.deg_v}")
        return k

    def to_json(self) -> dict:
        return {
            "deg_l": self.deg_l,
            "deg_v": self.deg_v,
            "k": self.k,
            "k_terminal": self.k_terminal,
            "lambda": self.lam,
            "terminal": self.terminal,
            "x_tilde": None if self.x_tilde is None else self.x_tilde.to_json(),
            "normalize": self.normalize,
            "tolerances": {"gap": self.tolerances.gap, "feas": self.tolerances.feas},
        }


def resolve_terminal(X_T: SemialgebraicSet, encoding: str = "auto") -> str:
    """Pick the terminal encoding: a point, a single variety, or the general pair."""
    if encoding == "auto":
        if isinstance(X_T.shape, Point):
            return "value_zero_point"
        if len(X_T.eqs) == 1 and not X_T.ineqs:
            return "variety_ideal"
        return "putinar_pair"
    if encoding not in TERMINAL_ENCODINGS:
        raise IocpError(f"unknown terminal encoding {encoding!r}")
    if encoding == "value_zero_point" and not isinstance(X_T.shape, Point):
        raise IocpError("value_zero_point needs X_T to be a single point")
    if encoding == "variety_ideal" and (len(X_T.eqs) != 1 or X_T.ineqs):
        raise IocpError("variety_ideal needs X_T = {h = 0} for a single h")
    return encoding


def normalization_moments(problem: DirectProblem, x_tilde: SemialgebraicSet | None,
                          degree: int) -> MomentVector:
    region = product(problem.X if x_tilde is None else x_tilde, problem.U)
    return lebesgue_moments(region, degree)


# -- program assembly -----------------------------------------------------------

@dataclass
class IocpProgram:
    """An assembled program plus the bookkeeping to read a solution back."""

    prog: ConicProgram
    problem: DirectProblem
    k: int
    variant: str
    terminal: str
    eps: int
    l: PolyVariable | None
    l_fixed: Polynomial | None
    v: PolyVariable | None
    v_fixed: Polynomial | None
    handles: dict[str, PutinarHandle]
    normalize: bool
    x_tilde: SemialgebraicSet | None

    def l_value(self, x: np.ndarray) -> Polynomial:
        return self.l_fixed if self.l is None else self.l.value(x)

    def v_value(self, x: np.ndarray) -> Polynomial:
        return self.v_fixed if self.v is None else self.v.value(x)


def _assemble(problem: DirectProblem, mu: np.ndarray, mu_T: np.ndarray | None, k: int, k_T: int,
              deg_l: int, deg_v: int, terminal: str, variant: str, normalize: bool,
              x_tilde: SemialgebraicSet | None, lam: float = 0.0,
              l_fixed: Polynomial | None = None, v_fixed: Polynomial | None = None,
              eps_nonneg: bool = False) -> IocpProgram:
    """Common builder; `mu` holds joint moments up to degree 2k in graded-lex order."""
    if variant not in VARIANTS:
        raise IocpError(f"unknown variant {variant!r}")
    n, dx = problem.nvars, problem.dx
    prog = ConicProgram()
    eps = prog.add_variable("eps")
    one = Polynomial.constant(n, 1.0)

    l_var = None
    if l_fixed is None:
        l_var = PolyVariable.declare(prog, n, deg_l, "l")
        l_expr = l_var.expr()
    else:
        if l_fixed.nvars != n:
            raise IocpError(f"l has {l_fixed.nvars} variables, expected {n}")
        if l_fixed.degree > 2 * k:
            raise IocpError(f"deg l = {l_fixed.degree} exceeds 2k = {2 * k}")
        l_expr = AffinePolyExpr.constant(l_fixed)

    if variant == "polyIOCP":
        terminal = "putinar_pair"
    X_T = problem.X_T
    v_var = None
    if v_fixed is not None:
        if v_fixed.nvars != dx:
            raise IocpError(f"v has {v_fixed.nvars} variables, expected {dx}")
        v_expr = AffinePolyExpr.constant(v_fixed)
        grad_expr = AffinePolyExpr.constant(dot_dynamics(v_fixed, problem.f))
    else:
        if terminal == "variety_ideal":
            h = X_T.eqs[0]
            if deg_v < h.degree:
                raise IocpError("deg v is below the degree of the terminal variety")
            v_var = PolyVariable.declare(prog, dx, deg_v - h.degree, "v", factor=h)
        else:
            v_var = PolyVariable.declare(prog, dx, deg_v, "v")
        v_expr = v_var.expr()
        grad_expr = v_var.dot_dynamics(problem.f)
    E = l_expr + grad_expr
    if E.degree > 2 * k:
        raise IocpError(f"deg(l + grad v . f) = {E.degree} exceeds 2k = {2 * k}")

    # (a) empirical complementarity <mu, E> <= eps
    c0, lin = E.linear_form(mu, 2 * k)
    cols = list(lin) + [eps]
    vals = list(lin.values()) + [-1.0]
    prog.add_inequality(cols, vals, -c0, "empirical")

    # (b) cone membership on X x U (polyIOCP keeps the +eps offset inside)
    cone_expr = E + AffinePolyExpr.scalar_times(eps, one) if variant == "polyIOCP" else E
    handles = {"cone": putinar_constrain(prog, cone_expr, problem.XU, k, tag="cone")}

    # (c) terminal condition
    one_x = Polynomial.constant(dx, 1.0)
    if terminal == "value_zero_point":
        z = X_T.shape.z
        if v_var is not None:
            prog.add_equality(v_var.vars, v_var.eval_row(z), 0.0, "terminal")
        elif abs(v_fixed.evaluate(z)) > 1e-12:
            # an empty row with nonzero right-hand side marks the program infeasible
            prog.add_equality([], [], abs(v_fixed.evaluate(z)), "terminal")
    elif terminal == "variety_ideal":
        if v_var is None:
            # a fixed v vanishes on the variety iff both v and -v are certified there
            handles["terminal.neg"] = putinar_constrain(prog, -v_expr, X_T, k_T, tag="terminal.neg")
            handles["terminal.pos"] = putinar_constrain(prog, v_expr, X_T, k_T, tag="terminal.pos")
    elif terminal == "putinar_pair":
        handles["terminal.neg"] = putinar_constrain(prog, -v_expr, X_T, k_T, tag="terminal.neg")
        if variant == "sampled":
            band = v_expr + AffinePolyExpr.scalar_times(eps, one_x)
            handles["terminal.band"] = putinar_constrain(prog, band, X_T, k_T, tag="terminal.band")
        else:
            if mu_T is None:
                raise IocpError("the polyIOCP variant needs terminal moments")
            t0, tlin = v_expr.linear_form(mu_T, v_expr.degree if v_expr.degree >= 0 else 0)
            cols = list(tlin) + [eps]
            vals = [-c for c in tlin.values()] + [-1.0]
            prog.add_inequality(cols, vals, t0, "terminal.mean")
    else:
        raise IocpError(f"unknown terminal encoding {terminal!r}")

    # (d) normalization over X~ x U
    if normalize:
        m = normalization_moments(problem, x_tilde, 2 * k)
        c0, lin = E.linear_form(m.values, 2 * k)
        prog.add_equality(list(lin), list(lin.values()), 1.0 - c0, "normalization")

    if eps_nonneg:
        prog.add_inequality([eps], [-1.0], 0.0, "eps>=0")
    prog.add_objective([eps], [1.0])
    if l_var is not None:
        l1_lift(prog, l_var.vars, lam)
    return IocpProgram(prog, problem, k, variant, terminal, eps, l_var, l_fixed, v_var, v_fixed,
                       handles, normalize, x_tilde)


def _truncate(moments: np.ndarray, nvars: int, degree: int) -> np.ndarray:
    size = math.comb(nvars + degree, degree)
    if moments.shape[0] < size:
        raise IocpError("moment vector does not reach the cone degree")
    return moments[:size]


def build_sampled_iocp(problem: DirectProblem, D: TrajectoryDataset, cfg: IocpConfig) -> IocpProgram:
    """The regularized program: minimize eps + lam ||l||_1."""
    if (D.dx, D.du) != (problem.dx, problem.du):
        raise IocpError("dataset dimensions do not match the problem")
    k = cfg.cone_degree(problem)
    terminal = resolve_terminal(problem.X_T, cfg.terminal)
    k_T = cfg.terminal_degree(problem) if terminal == "putinar_pair" else k
    mu = basis_eval_many(problem.nvars, 2 * k, D.points).mean(axis=0)
    return _assemble(problem, mu, None, k, k_T, cfg.deg_l, cfg.deg_v, terminal, "sampled",
                     cfg.normalize, cfg.x_tilde, lam=cfg.lam)


# -- solutions --------------------------------------------------------------------

@dataclass
class IocpSolution:
    l: Polynomial
    v: Polynomial
    epsilon: float
    lam: float
    k: int
    variant: str
    terminal: str
    normalize: bool
    x_tilde: SemialgebraicSet | None
    certificates: dict[str, GramCertificate]
    solver: dict
    residuals: dict = field(default_factory=dict)

    @property
    def verified(self) -> bool:
        return bool(self.residuals.get("ok", False))

    def to_json(self) -> dict:
        return {
            "lambda": self.lam,
            "epsilon": self.epsilon,
            "l": self.l.to_json(),
            "v": self.v.to_json(),
            "residuals": self.residuals,
            "solver": self.solver,
        }


def _read_solution(built: IocpProgram, sol: ConicSolution, lam: float) -> IocpSolution:
    x = sol.x
    certs = {name: extract_certificate(h, sol) for name, h in built.handles.items()}
    return IocpSolution(
        l=built.l_value(x),
        v=built.v_value(x),
        epsilon=float(x[built.eps]),
        lam=lam,
        k=built.k,
        variant=built.variant,
        terminal=built.terminal,
        normalize=built.normalize,
        x_tilde=built.x_tilde,
        certificates=certs,
        solver=sol.summary(),
    )


def solve_iocp(problem: DirectProblem, D: TrajectoryDataset, cfg: IocpConfig) -> IocpSolution:
    """Build, solve and independently verify the sampled program."""
    built = build_sampled_iocp(problem, D, cfg)
    sol = conic.solve(built.prog, cfg.tolerances)
    if sol.status != "optimal":
        raise SolverFailure(f"IOCP program ended with status {sol.status}", sol)
    out = _read_solution(built, sol, cfg.lam)
    out.residuals = verify_solution(out, problem, D)
    return out


# -- membership -------------------------------------------------------------------

@dataclass
class MembershipResult:
    feasible: bool
    epsilon: float
    eps_min: float
    status: str
    v: Polynomial | None = None
    certificates: dict[str, GramCertificate] = field(default_factory=dict)
    reports: dict[str, CertificateReport] = field(default_factory=dict)
    solver: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "feasible": self.feasible,
            "epsilon": self.epsilon,
            "eps_min": self.eps_min,
            "status": self.status,
            "v": None if self.v is None else self.v.to_json(),
            "certificates": {name: r.to_json() for name, r in self.reports.items()},
            "gram": {name: c.to_json() for name, c in self.certificates.items()},
            "solver": self.solver,
        }


def check_membership(l: Polynomial, data, eps: float, k: int, problem: DirectProblem,
                     variant: str = "sampled", normalize: bool = True, terminal: str = "auto",
                     deg_v: int | None = None, v: Polynomial | None = None,
                     x_tilde: SemialgebraicSet | None = None,
                     tol: Tolerances = PIPELINE_TOLERANCES) -> MembershipResult:
    """Is l an eps-solution at degree k for the given data?

    `data` is a :class:`TrajectoryDataset` or a pair ``(mu, mu_T)`` of moment
    vectors (mu_T may be None for the sampled variant).  The check minimizes the
    tolerance over v and compares the optimum with `eps`; passing `v` fixes the
    value polynomial and only searches for Gram certificates.
    """
    if eps < 0:
        raise IocpError("eps must be non-negative")
    if isinstance(data, TrajectoryDataset):
        mu = basis_eval_many(problem.nvars, 2 * k, data.points).mean(axis=0)
        mom = data.moments(2 * k) if data.terminal is not None else None
        mu_T = mom.terminal if mom is not None else None
    else:
        mu_m, mu_T_m = data
        mu = _truncate(np.asarray(mu_m.values if isinstance(mu_m, MomentVector) else mu_m),
                       problem.nvars, 2 * k)
        mu_T = None
        if mu_T_m is not None:
            mu_T = np.asarray(mu_T_m.values if isinstance(mu_T_m, MomentVector) else mu_T_m)
    if variant == "polyIOCP" and mu_T is None:
        raise IocpError("the polyIOCP variant needs terminal moments or terminal points")
    if mu_T is not None:
        mu_T = _truncate(mu_T, problem.dx, 2 * k)
    deg_v = problem.max_value_degree(k) if deg_v is None else deg_v
    enc = resolve_terminal(problem.X_T, terminal)
    built = _assemble(problem, mu, mu_T, k, k, l.degree, deg_v, enc, variant, normalize, x_tilde,
                      l_fixed=l, v_fixed=v, eps_nonneg=True)
    sol = conic.solve(built.prog, tol)
    if sol.status != "optimal":
        return MembershipResult(False, eps, float("nan"), sol.status, solver=sol.summary())
    eps_min = float(sol.x[built.eps])
    vv = built.v_value(sol.x)
    certs = {name: extract_certificate(h, sol) for name, h in built.handles.items()}
    reports = {name: verify_certificate(c) for name, c in certs.items()}
    # the interior point optimum sits within a gap tolerance of the true minimum
    feasible = eps_min <= eps + 10 * tol.gap and all(r.ok for r in reports.values())
    return MembershipResult(feasible, eps, eps_min, sol.status, vv, certs, reports, sol.summary())


# -- verification -----------------------------------------------------------------

def _terminal_points(X_T: SemialgebraicSet, seed: int = 0, count: int = 256) -> np.ndarray | None:
    if isinstance(X_T.shape, Point):
        return np.array([X_T.shape.z])
    if isinstance(X_T.shape, Sphere):
        return sample_uniform(X_T, count, seed)
    if X_T.nvars == 1 and len(X_T.eqs) == 1 and not X_T.ineqs:
        h = X_T.eqs[0]
        coeffs = [h.coeff((d,)) for d in range(h.degree, -1, -1)]
        roots = np.roots(coeffs)
        real = roots[np.abs(roots.imag) < 1e-9].real
        return real.reshape(-1, 1) if real.size else None
    return None


def verify_solution(sol: IocpSolution, problem: DirectProblem, D: TrajectoryDataset,
                    x_tilde: SemialgebraicSet | None = None, tol: float = RESIDUAL_TOL) -> dict:
    """Recompute every constraint from the polynomials alone.

    Reports the excess of the empirical mean over epsilon, the certificate
    reconstruction residuals and minimum eigenvalues, the largest terminal
    violation and the normalization mismatch.
    """
    x_tilde = sol.x_tilde if x_tilde is None else x_tilde
    E = sol.l + dot_dynamics(sol.v, problem.f)
    emp = empirical_functional(D, E)
    out: dict = {"empirical": emp, "empirical_excess": max(emp - sol.epsilon, 0.0)}

    targets = {"cone": E + (sol.epsilon if sol.variant == "polyIOCP" else 0.0)}
    if "terminal.neg" in sol.certificates:
        targets["terminal.neg"] = -sol.v
    if "terminal.band" in sol.certificates:
        targets["terminal.band"] = sol.v + sol.epsilon
    if "terminal.pos" in sol.certificates:
        targets["terminal.pos"] = sol.v
    certs = {}
    for name, cert in sol.certificates.items():
        rep = verify_certificate(cert, targets.get(name))
        certs[name] = rep.to_json()
    out["certificates"] = certs

    pts = _terminal_points(problem.X_T)
    term = 0.0
    if pts is not None:
        vals = sol.v.evaluate_many(pts)
        if sol.terminal == "putinar_pair":
            # v <= 0 and v >= -eps on X_T
            term = float(max(np.max(vals), np.max(-sol.epsilon - vals), 0.0))
        else:
            term = float(np.max(np.abs(vals)))
    out["terminal"] = term

    if sol.normalize:
        deg = max(E.degree, 0)
        m = normalization_moments(problem, x_tilde, deg)
        out["normalization"] = abs(m.integrate(E) - 1.0)
    else:
        out["normalization"] = 0.0

    out["ok"] = bool(
        out["empirical_excess"] <= tol
        and all(c["ok"] for c in certs.values())
        and out["terminal"] <= tol
        and out["normalization"] <= tol
    )
    return out


def coefficient_rows(p: Polynomial, name: str) -> list[dict]:
    """Rows ``{poly, exponents, coef}`` for a coefficient CSV."""
    return [{"poly": name, "exponents": " ".join(map(str, e)), "coef": c} for e, c in p.items()]
