"""Relaxed HJB lower bounds and complementarity residuals for the direct problem."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import conic
from .conic import ConicSolution, Tolerances
from .occupation import TrajectoryDataset, empirical_functional
from .polynomials import Polynomial, dot_dynamics
from .semialgebraic import MomentVector, SemialgebraicSet, product
from .soscomp import (
    AffinePolyExpr,
    CertificateReport,
    ConicProgram,
    GramCertificate,
    PolyVariable,
    extract_certificate,
    putinar_constrain,
    verify_certificate,
)

# target 1e-7; high-degree programs that stall near the end are accepted at 1e-6
PIPELINE_TOLERANCES = Tolerances(gap=1e-7, feas=1e-7, accept=1e-6)


class SolverFailure(RuntimeError):
    """The conic solver did not return an optimal point."""

    def __init__(self, message: str, solution: ConicSolution | None = None):
        super().__init__(message)
        self.solution = solution


@dataclass(frozen=True)
class DirectProblem:
    """Dynamics ``x' = f(x, u)`` on X x U, stopped on X_T, with horizon bound T_M."""

    f: tuple[Polynomial, ...]
    X: SemialgebraicSet
    U: SemialgebraicSet
    X_T: SemialgebraicSet
    T_M: float = 1.0

    def __post_init__(self):
        f = tuple(self.f)
        object.__setattr__(self, "f", f)
        if len(f) != self.X.nvars:
            raise ValueError(f"f has {len(f)} components for {self.X.nvars} states")
        if any(fi.nvars != self.nvars for fi in f):
            raise ValueError("f must be defined over the joint (x, u) variables")
        if self.X_T.nvars != self.X.nvars:
            raise ValueError("X_T must live in the state space")
        if not self.T_M > 0:
            raise ValueError("T_M must be positive")

    @property
    def dx(self) -> int:
        return self.X.nvars

    @property
    def du(self) -> int:
        return self.U.nvars

    @property
    def nvars(self) -> int:
        return self.X.nvars + self.U.nvars

    @property
    def deg_f(self) -> int:
        return max(max(fi.degree for fi in self.f), 0)

    @property
    def XU(self) -> SemialgebraicSet:
        return product(self.X, self.U)

    def to_json(self) -> dict:
        return {
            "f": [fi.to_json() for fi in self.f],
            "X": self.X.to_json(),
            "U": self.U.to_json(),
            "X_T": self.X_T.to_json(),
            "T_M": self.T_M,
        }

    @classmethod
    def from_json(cls, data: dict) -> "DirectProblem":
        return cls(
            tuple(Polynomial.from_json(fi) for fi in data["f"]),
            SemialgebraicSet.from_json(data["X"]),
            SemialgebraicSet.from_json(data["U"]),
            SemialgebraicSet.from_json(data["X_T"]),
            float(data.get("T_M", 1.0)),
        )

    def max_value_degree(self, k: int) -> int:
        """Largest deg v with grad v . f inside degree 2k."""
        return min(2 * k, 2 * k + 1 - self.deg_f)


@dataclass
class HjbCertificate:
    v: Polynomial
    w: float
    bound: float
    k: int
    certificates: dict[str, GramCertificate]
    reports: dict[str, CertificateReport]
    solver: dict = field(default_factory=dict)

    @property
    def verified(self) -> bool:
        return all(r.ok for r in self.reports.values())

    def to_json(self) -> dict:
        return {
            "k": self.k,
            "bound": self.bound,
            "w": self.w,
            "v": self.v.to_json(),
            "certificates": {name: r.to_json() for name, r in self.reports.items()},
            "solver": self.solver,
        }


def hjb_bound(l: Polynomial, mu0: MomentVector | Sequence[float], prob: DirectProblem, k: int,
              with_w: bool = True, tol: Tolerances = PIPELINE_TOLERANCES) -> HjbCertificate:
    """Maximize ``<mu0, v> - w T_M`` over the relaxed HJB inequalities at degree k.

    `mu0` is either a moment vector or a point z, the latter standing for the
    Dirac mass at z.
    """
    if l.nvars != prob.nvars:
        raise ValueError(f"l has {l.nvars} variables, expected {prob.nvars}")
    if l.degree > 2 * k:
        raise ValueError(f"deg l = {l.degree} exceeds 2k = {2 * k}")
    deg_v = prob.max_value_degree(k)
    if deg_v < 0:
        raise ValueError("k too small for the degree of f")
    if not isinstance(mu0, MomentVector):
        mu0 = MomentVector.dirac(mu0, deg_v)
    if mu0.nvars != prob.dx or mu0.degree < deg_v:
        raise ValueError("initial moments do not cover the value polynomial")

    prog = ConicProgram()
    prog.set_sense("max")
    v = PolyVariable.declare(prog, prob.dx, deg_v, "v")
    expr = AffinePolyExpr.constant(l) + v.dot_dynamics(prob.f)
    w = None
    if with_w:
        w = prog.add_variable("w")
        expr = expr + AffinePolyExpr.scalar_times(w, Polynomial.constant(prob.nvars, 1.0))
        prog.add_inequality([w], [-1.0], 0.0, "w>=0")
        prog.add_objective([w], [-prob.T_M])
    cone = putinar_constrain(prog, expr, prob.XU, k, tag="hjb")
    term = putinar_constrain(prog, -v.expr(), prob.X_T, k, tag="terminal")
    weights = mu0.values[: len(v.vars)]
    prog.add_objective(v.vars, weights)

    sol = conic.solve(prog, tol)
    if sol.status != "optimal":
        raise SolverFailure(f"HJB program ended with status {sol.status}", sol)
    certs = {"hjb": extract_certificate(cone, sol), "terminal": extract_certificate(term, sol)}
    vv = v.value(sol.x)
    ww = float(sol.x[w]) if w is not None else 0.0
    targets = {
        "hjb": l + dot_dynamics(vv, prob.f) + ww,
        "terminal": -vv,
    }
    reports = {name: verify_certificate(c, targets[name]) for name, c in certs.items()}
    bound = float(vv.coeff_vector(deg_v) @ weights) - ww * prob.T_M
    return HjbCertificate(vv, ww, bound, k, certs, reports, sol.summary())


def complementarity_residuals(l: Polynomial, cert: HjbCertificate, D: TrajectoryDataset,
                              f: Sequence[Polynomial], mass: float | None = None,
                              T_M: float = 1.0) -> tuple[float, float, float]:
    """``(w (mass - T_M), mass <l_n, l + w + grad v . f>, <mu_T empirical, v>)``."""
    mass = D.mass if mass is None else mass
    r1 = cert.w * (mass - T_M)
    r2 = mass * empirical_functional(D, l + dot_dynamics(cert.v, f) + cert.w)
    r3 = 0.0
    if D.terminal is not None and D.terminal.shape[0]:
        r3 = float(np.mean(cert.v.evaluate_many(D.terminal)))
    return float(r1), float(r2), float(r3)
