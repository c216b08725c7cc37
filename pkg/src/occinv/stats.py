"""Finite-sample bounds for replacing the occupation measure by its empirical average.

For nonnegative polynomials of degree d with unit integral over a region,
the gap between the true and empirical means is at most
``(K1 + K2 sqrt(ln(2/delta))) / sqrt(n)`` with probability 1 - delta, where
``K1 = 2 M_c M_v`` and ``K2 = M_inf / sqrt(2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from . import conic
from .direct import PIPELINE_TOLERANCES
from .polynomials import basis_eval, basis_eval_many, basis_size
from .semialgebraic import (
    Ball,
    Box,
    Product,
    SemialgebraicSet,
    lebesgue_moments,
    sample_uniform,
)
from .soscomp import ConicProgram, PolyVariable, putinar_constrain

EXACT = "exact"
UPPER = "upper"
MC_LOWER = "monte-carlo-lower"


class BoundError(ValueError):
    pass


@dataclass
class SampleBound:
    d: int
    M_inf: float
    M_c: float
    M_v: float
    provenance: dict = field(default_factory=dict)
    K1: float = field(init=False)
    K2: float = field(init=False)

    def __post_init__(self):
        for name in ("M_inf", "M_c", "M_v"):
            val = getattr(self, name)
            if not (val > 0 and math.isfinite(val)):
                raise BoundError(f"{name} must be a positive finite number, got {val}")
        self.K1 = 2.0 * self.M_c * self.M_v
        self.K2 = self.M_inf / math.sqrt(2.0)

    def to_json(self) -> dict:
        return {
            "d": self.d,
            "M": {
                name: {"value": getattr(self, name), "provenance": self.provenance.get(name, MC_LOWER)}
                for name in ("M_inf", "M_c", "M_v")
            },
            "K1": self.K1,
            "K2": self.K2,
        }


def epsilon_prime(bound: SampleBound, eps: float, n: int, delta: float) -> float:
    """``eps + (K1 + K2 sqrt(ln(2/delta))) / sqrt(n)``."""
    if not 0.0 < delta < 1.0:
        raise BoundError("delta must lie in (0, 1)")
    if n < 1:
        raise BoundError("n must be at least 1")
    if eps < 0:
        raise BoundError("eps must be non-negative")
    return eps + (bound.K1 + bound.K2 * math.sqrt(math.log(2.0 / delta))) / math.sqrt(n)


def bound_table(bound: SampleBound, eps: float, ns: Sequence[int], deltas: Sequence[float]) -> list[dict]:
    return [{"n": int(n), "delta": float(dl), "eps_prime": epsilon_prime(bound, eps, int(n), float(dl))}
            for n in ns for dl in deltas]


# -- M_v: largest norm of the monomial vector -------------------------------------------

def _box_extent(Z: SemialgebraicSet) -> np.ndarray | None:
    """Per-coordinate max |z_i| when Z is a box or a product of boxes."""
    s = Z.shape
    if isinstance(s, Box):
        return np.maximum(np.abs(s.lower), np.abs(s.upper))
    if isinstance(s, Product):
        parts = [_box_extent(f) for f in s.factors]
        if all(p is not None for p in parts):
            return np.concatenate(parts)
    return None


def m_v_exact_box(Z: SemialgebraicSet, d: int) -> float:
    """Every monomial squared is coordinatewise increasing in |z|, so a corner attains the sup."""
    ext = _box_extent(Z)
    if ext is None:
        raise BoundError("closed form only available for boxes")
    return float(np.linalg.norm(basis_eval(Z.nvars, d, ext)))


def m_v_numeric(Z: SemialgebraicSet, d: int, samples: int = 2000, seed: int = 0, refine: int = 5) -> float:
    """Sample, then polish the best candidates with a local optimizer."""
    n = Z.nvars
    rng = np.random.default_rng(seed)
    pts = sample_uniform(Z, samples, rng)
    s = Z.shape
    if isinstance(s, Ball):
        c = np.array(s.center)
        # the sup sits on the boundary sphere, so also sample there
        g = rng.standard_normal((samples, n))
        pts = np.vstack([pts, c + s.radius * g / np.linalg.norm(g, axis=1, keepdims=True)])
    vals = np.linalg.norm(basis_eval_many(n, d, pts), axis=1)
    best = float(vals.max())
    ext = _box_extent(Z)

    def neg(z):
        return -float(np.linalg.norm(basis_eval(n, d, z)))

    for idx in np.argsort(vals)[::-1][:refine]:
        z0 = pts[idx]
        if ext is not None:
            lo = np.array(s.lower) if isinstance(s, Box) else -ext
            hi = np.array(s.upper) if isinstance(s, Box) else ext
            res = minimize(neg, z0, method="L-BFGS-B", bounds=list(zip(lo, hi)))
            best = max(best, -res.fun)
        elif isinstance(s, Ball):
            c = np.array(s.center)

            def on_sphere(y, c=c, r=s.radius):
                return neg(c + r * y / max(np.linalg.norm(y), 1e-300))

            res = minimize(on_sphere, z0 - c + 1e-12, method="Nelder-Mead",
                           options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 4000})
            best = max(best, -res.fun)
    return best


# -- M_inf and M_c: probes of the SOS inner approximation -------------------------------------

def _probe(Z: SemialgebraicSet, mom: np.ndarray, d: int, k: int, weights: np.ndarray) -> np.ndarray | None:
    """Maximize ``weights . c(p)`` over p in Q_k(Z) of degree d with unit integral."""
    prog = ConicProgram()
    prog.set_sense("max")
    p = PolyVariable.declare(prog, Z.nvars, d, "p")
    putinar_constrain(prog, p.expr(), Z, k, tag="probe")
    prog.add_equality(p.vars, mom, 1.0, "unit integral")
    prog.add_objective(p.vars, weights)
    sol = conic.solve(prog, PIPELINE_TOLERANCES)
    if sol.status != "optimal":
        return None
    return sol.x[p.vars]


def _first_probe_point(Z: SemialgebraicSet) -> np.ndarray | None:
    s = Z.shape
    if isinstance(s, Box):
        return np.array(s.upper)
    if isinstance(s, Ball):
        z = np.array(s.center, dtype=float)
        z[0] += s.radius
        return z
    ext = _box_extent(Z)
    return ext


def estimate_constants(Z: SemialgebraicSet, Z_tilde: SemialgebraicSet | None = None, d: int = 2,
                       budget: int = 4, seed: int = 0, k: int | None = None) -> SampleBound:
    """Estimate the three constants of the bound for degree-d polynomials on Z.

    M_v is exact on boxes and numerically maximized otherwise.  M_inf and M_c
    are running maxima over `budget` conic probes of the SOS inner
    approximation, hence lower estimates.  Probe i is the same for every
    budget larger than i, so the estimates never decrease as the budget grows.
    """
    if budget < 1:
        raise BoundError("probe budget must be at least 1")
    if Z.shape is None or not Z.archimedean:
        raise BoundError("Z must be a compact tagged region")
    Z_tilde = Z if Z_tilde is None else Z_tilde
    k = math.ceil(d / 2) if k is None else k
    nb = basis_size(Z.nvars, d)
    mom = lebesgue_moments(Z_tilde, d).values
    if mom[0] <= 0:
        raise BoundError("normalization region has zero volume")

    prov = {}
    if _box_extent(Z) is not None:
        M_v = m_v_exact_box(Z, d)
        prov["M_v"] = EXACT
    else:
        M_v = m_v_numeric(Z, d, seed=seed)
        prov["M_v"] = MC_LOWER

    rng = np.random.default_rng(seed)
    first = _first_probe_point(Z)
    M_inf, M_c = 0.0, 0.0
    for i in range(budget):
        if i == 0 and first is not None:
            z = first
        else:
            z = sample_uniform(Z, 1, rng)[0]
        w = rng.standard_normal(nb)
        w /= np.linalg.norm(w)
        c = _probe(Z, mom, d, k, basis_eval(Z.nvars, d, z))
        if c is not None:
            M_inf = max(M_inf, float(c @ basis_eval(Z.nvars, d, z)))
            M_c = max(M_c, float(np.linalg.norm(c)))
        c = _probe(Z, mom, d, k, w)
        if c is not None:
            M_c = max(M_c, float(np.linalg.norm(c)))
    prov["M_inf"] = MC_LOWER
    prov["M_c"] = MC_LOWER
    if M_inf <= 0 or M_c <= 0:
        raise BoundError("all probes failed; no estimate available")
    return SampleBound(d, M_inf, M_c, M_v, prov)


def bound_report(bound: SampleBound, eps: float = 0.0, ns: Sequence[int] = (20, 100, 1000),
                 deltas: Sequence[float] = (0.05,)) -> dict:
    out = bound.to_json()
    out["table"] = bound_table(bound, eps, ns, deltas)
    return out
