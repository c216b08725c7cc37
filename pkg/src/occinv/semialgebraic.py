"""Basic semialgebraic sets with exact Lebesgue moments and uniform sampling.

A set is ``{z : g_i(z) >= 0, h_j(z) = 0}``.  Sets built through the
constructors below also carry a shape tag, which unlocks closed-form
moments and direct samplers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
from scipy.special import gammaln

from .polynomials import Polynomial, basis_array, basis_eval_many

DEFAULT_TAU = 1e-8


class RegionError(ValueError):
    """Unsupported or degenerate region for the requested operation."""


# -- shape tags ---------------------------------------------------------------

@dataclass(frozen=True)
class Box:
    lower: tuple[float, ...]
    upper: tuple[float, ...]


@dataclass(frozen=True)
class Ball:
    center: tuple[float, ...]
    radius: float


@dataclass(frozen=True)
class Annulus:
    center: tuple[float, ...]
    r_in: float
    r_out: float


@dataclass(frozen=True)
class Sphere:
    center: tuple[float, ...]
    radius: float


@dataclass(frozen=True)
class Point:
    z: tuple[float, ...]


@dataclass(frozen=True)
class Product:
    factors: tuple["SemialgebraicSet", ...]


@dataclass(frozen=True)
class Difference:
    outer: "SemialgebraicSet"
    inner: "SemialgebraicSet"


Shape = Union[Box, Ball, Annulus, Sphere, Point, Product, Difference]


@dataclass(frozen=True)
class SemialgebraicSet:
    nvars: int
    ineqs: tuple[Polynomial, ...] = ()
    eqs: tuple[Polynomial, ...] = ()
    shape: Shape | None = None
    archimedean: bool = False
    name: str = field(default="", compare=False)

    def __post_init__(self):
        for p in self.ineqs + self.eqs:
            if p.nvars != self.nvars:
                raise RegionError(f"polynomial with {p.nvars} variables in a set of {self.nvars}")

    # -- membership -------------------------------------------------

    def contains(self, z: Sequence[float], tau: float = DEFAULT_TAU) -> bool:
        return bool(self.contains_many(np.asarray(z, dtype=float).reshape(1, -1), tau)[0])

    def contains_many(self, points: np.ndarray, tau: float = DEFAULT_TAU) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        if points.ndim != 2 or points.shape[1] != self.nvars:
            raise RegionError(f"points must have {self.nvars} columns")
        ok = np.ones(points.shape[0], dtype=bool)
        for g in self.ineqs:
            ok &= g.evaluate_many(points) >= -tau
        for h in self.eqs:
            ok &= np.abs(h.evaluate_many(points)) <= tau
        if isinstance(self.shape, Difference) and not self.ineqs and not self.eqs:
            ok &= self.shape.outer.contains_many(points, tau)
            ok &= ~_interior(self.shape.inner, points, tau)
        return ok

    def contains_shape(self, points: np.ndarray, tau: float = DEFAULT_TAU) -> np.ndarray:
        """Membership via the shape's closed form, independent of the polynomials."""
        points = np.asarray(points, dtype=float)
        s = self.shape
        if isinstance(s, Box):
            lo, hi = np.array(s.lower), np.array(s.upper)
            return np.all((points >= lo - tau) & (points <= hi + tau), axis=1)
        if isinstance(s, Ball):
            return np.linalg.norm(points - np.array(s.center), axis=1) <= s.radius + tau
        if isinstance(s, Annulus):
            r = np.linalg.norm(points - np.array(s.center), axis=1)
            return (r <= s.r_out + tau) & (r >= s.r_in - tau)
        if isinstance(s, Sphere):
            r = np.linalg.norm(points - np.array(s.center), axis=1)
            return np.abs(r - s.radius) <= tau
        if isinstance(s, Point):
            return np.all(np.abs(points - np.array(s.z)) <= tau, axis=1)
        if isinstance(s, Product):
            ok = np.ones(points.shape[0], dtype=bool)
            off = 0
            for f in s.factors:
                ok &= f.contains_shape(points[:, off : off + f.nvars], tau)
                off += f.nvars
            return ok
        if isinstance(s, Difference):
            return s.outer.contains_shape(points, tau) & ~s.inner.contains_shape(points, -tau)
        return self.contains_many(points, tau)

    # -- serialization ----------------------------------------------

    def to_json(self) -> dict:
        return {
            "nvars": self.nvars,
            "shape": _shape_to_json(self.shape),
            "ineqs": [p.to_json() for p in self.ineqs],
            "eqs": [p.to_json() for p in self.eqs],
            "archimedean": self.archimedean,
        }

    @classmethod
    def from_json(cls, data: dict) -> "SemialgebraicSet":
        shape = data.get("shape")
        if shape is not None:
            rebuilt = _shape_from_json(shape)
            if rebuilt.nvars != data["nvars"]:
                raise RegionError("shape dimension disagrees with nvars")
            return rebuilt
        return cls(
            nvars=int(data["nvars"]),
            ineqs=tuple(Polynomial.from_json(p) for p in data.get("ineqs", [])),
            eqs=tuple(Polynomial.from_json(p) for p in data.get("eqs", [])),
            archimedean=bool(data.get("archimedean", False)),
        )


def _interior(region: SemialgebraicSet, points: np.ndarray, tau: float) -> np.ndarray:
    ok = np.ones(points.shape[0], dtype=bool)
    for g in region.ineqs:
        ok &= g.evaluate_many(points) > tau
    return ok


# -- constructors -------------------------------------------------------------

def _sq_dist(nvars: int, center: Sequence[float]) -> Polynomial:
    out = Polynomial.zero(nvars)
    for i, c in enumerate(center):
        out = out + (Polynomial.variable(nvars, i) - float(c)) ** 2
    return out


def box(lower: Sequence[float], upper: Sequence[float]) -> SemialgebraicSet:
    lower = tuple(float(a) for a in lower)
    upper = tuple(float(b) for b in upper)
    if len(lower) != len(upper) or any(a >= b for a, b in zip(lower, upper)):
        raise RegionError("box needs lower < upper in every coordinate")
    n = len(lower)
    ineqs = tuple(
        (Polynomial.variable(n, i) - a) * (b - Polynomial.variable(n, i))
        for i, (a, b) in enumerate(zip(lower, upper))
    )
    return SemialgebraicSet(n, ineqs, (), Box(lower, upper), True, "box")


def ball(center: Sequence[float] | int, radius: float = 1.0) -> SemialgebraicSet:
    """Closed ball; an integer `center` means the origin of that dimension."""
    center = (0.0,) * center if isinstance(center, int) else tuple(float(c) for c in center)
    if radius <= 0:
        raise RegionError("radius must be positive")
    n = len(center)
    g = radius**2 - _sq_dist(n, center)
    return SemialgebraicSet(n, (g,), (), Ball(center, float(radius)), True, "ball")


def annulus(center: Sequence[float] | int, r_in: float, r_out: float) -> SemialgebraicSet:
    center = (0.0,) * center if isinstance(center, int) else tuple(float(c) for c in center)
    if not 0 <= r_in < r_out:
        raise RegionError("annulus needs 0 <= r_in < r_out")
    n = len(center)
    d2 = _sq_dist(n, center)
    return SemialgebraicSet(n, (r_out**2 - d2, d2 - r_in**2), (), Annulus(center, float(r_in), float(r_out)),
                            True, "annulus")


def sphere(center: Sequence[float] | int, radius: float = 1.0) -> SemialgebraicSet:
    center = (0.0,) * center if isinstance(center, int) else tuple(float(c) for c in center)
    n = len(center)
    h = radius**2 - _sq_dist(n, center)
    return SemialgebraicSet(n, (), (h,), Sphere(center, float(radius)), True, "sphere")


def point(z: Sequence[float]) -> SemialgebraicSet:
    z = tuple(float(c) for c in z)
    n = len(z)
    eqs = tuple(Polynomial.variable(n, i) - c for i, c in enumerate(z))
    return SemialgebraicSet(n, (), eqs, Point(z), True, "point")


def product(*factors: SemialgebraicSet) -> SemialgebraicSet:
    n = sum(f.nvars for f in factors)
    ineqs, eqs = [], []
    off = 0
    for f in factors:
        pos = list(range(off, off + f.nvars))
        ineqs += [g.embed(n, pos) for g in f.ineqs]
        eqs += [h.embed(n, pos) for h in f.eqs]
        off += f.nvars
    return SemialgebraicSet(n, tuple(ineqs), tuple(eqs), Product(tuple(factors)),
                            all(f.archimedean for f in factors), "product")


def difference(outer: SemialgebraicSet, inner: SemialgebraicSet) -> SemialgebraicSet:
    """Closure of ``outer`` minus ``inner``.

    When `inner` is cut out by a single inequality ``g >= 0`` the result is
    again basic semialgebraic (``-g >= 0`` is appended); otherwise only the
    shape-based membership and rejection sampling are available.
    """
    if outer.nvars != inner.nvars:
        raise RegionError("dimension mismatch in set difference")
    shape = Difference(outer, inner)
    if len(inner.ineqs) == 1 and not inner.eqs:
        return SemialgebraicSet(outer.nvars, outer.ineqs + (-inner.ineqs[0],), outer.eqs, shape,
                                outer.archimedean, "difference")
    return SemialgebraicSet(outer.nvars, (), (), shape, False, "difference")


def cylinder(nvars: int, axes: Sequence[int], radius: float) -> SemialgebraicSet:
    """Unbounded set ``{sum_{i in axes} z_i^2 <= radius^2}`` (no shape tag)."""
    g = Polynomial.constant(nvars, radius**2)
    for i in axes:
        g = g - Polynomial.variable(nvars, i) ** 2
    return SemialgebraicSet(nvars, (g,), (), None, False, "cylinder")


# -- JSON for shapes ------------------------------------------------------------

def _shape_to_json(s: Shape | None):
    if s is None:
        return None
    if isinstance(s, Box):
        return {"kind": "box", "lower": list(s.lower), "upper": list(s.upper)}
    if isinstance(s, Ball):
        return {"kind": "ball", "center": list(s.center), "radius": s.radius}
    if isinstance(s, Annulus):
        return {"kind": "annulus", "center": list(s.center), "r_in": s.r_in, "r_out": s.r_out}
    if isinstance(s, Sphere):
        return {"kind": "sphere", "center": list(s.center), "radius": s.radius}
    if isinstance(s, Point):
        return {"kind": "point", "z": list(s.z)}
    if isinstance(s, Product):
        return {"kind": "product", "factors": [f.to_json() for f in s.factors]}
    if isinstance(s, Difference):
        return {"kind": "difference", "outer": s.outer.to_json(), "inner": s.inner.to_json()}
    raise RegionError(f"unknown shape {s!r}")


def _shape_from_json(d: dict) -> SemialgebraicSet:
    kind = d.get("kind")
    if kind == "box":
        return box(d["lower"], d["upper"])
    if kind == "ball":
        return ball(d["center"], d["radius"])
    if kind == "annulus":
        return annulus(d["center"], d["r_in"], d["r_out"])
    if kind == "sphere":
        return sphere(d["center"], d["radius"])
    if kind == "point":
        return point(d["z"])
    if kind == "product":
        return product(*(SemialgebraicSet.from_json(f) for f in d["factors"]))
    if kind == "difference":
        return difference(SemialgebraicSet.from_json(d["outer"]), SemialgebraicSet.from_json(d["inner"]))
    raise RegionError(f"unknown shape kind {kind!r}")


# -- moments ------------------------------------------------------------------

@dataclass(frozen=True)
class MomentVector:
    """Moments ``m_alpha = int z^alpha d rho`` in graded-lex order."""

    nvars: int
    degree: int
    values: np.ndarray

    @property
    def mass(self) -> float:
        return float(self.values[0])

    def integrate(self, p: Polynomial) -> float:
        return float(p.coeff_vector(self.degree) @ self.values)

    @classmethod
    def dirac(cls, z: Sequence[float], degree: int) -> "MomentVector":
        z = np.asarray(z, dtype=float).reshape(1, -1)
        return cls(z.shape[1], degree, basis_eval_many(z.shape[1], degree, z)[0])


def _sphere_integrals(exps: np.ndarray) -> np.ndarray:
    """int over the unit sphere of z^alpha, zero unless every exponent is even."""
    even = np.all(exps % 2 == 0, axis=1)
    beta = (exps + 1) / 2.0
    logv = np.log(2.0) + gammaln(beta).sum(axis=1) - gammaln(beta.sum(axis=1))
    return np.where(even, np.exp(logv), 0.0)


def _centered_ball_moments(n: int, d: int, radius: float) -> np.ndarray:
    exps = basis_array(n, d)
    tot = exps.sum(axis=1) + n
    return _sphere_integrals(exps) * radius**tot / tot


def _shift(n: int, d: int, centered: np.ndarray, center: Sequence[float]) -> np.ndarray:
    """Moments of the translated measure via binomial expansion."""
    center = np.asarray(center, dtype=float)
    if not np.any(center):
        return centered
    exps = basis_array(n, d)
    lookup = {tuple(e): k for k, e in enumerate(exps.tolist())}
    out = np.zeros(exps.shape[0])
    for a, alpha in enumerate(exps.tolist()):
        total = 0.0
        for gamma in np.ndindex(*[e + 1 for e in alpha]):
            w = 1.0
            for ai, gi, ci in zip(alpha, gamma, center):
                w *= math.comb(ai, gi) * ci ** (ai - gi)
            total += w * centered[lookup[tuple(gamma)]]
        out[a] = total
    return out


def lebesgue_moments(region: SemialgebraicSet, d: int, monte_carlo: bool = False,
                     samples: int = 1_000_000, seed: int = 0) -> MomentVector:
    """Lebesgue moments of degree <= d.

    Closed forms cover boxes, balls, annuli and products of these. Other
    regions need ``monte_carlo=True``, which estimates moments from uniform
    samples times a volume estimate.
    """
    n = region.nvars
    s = region.shape
    if isinstance(s, Box):
        exps = basis_array(n, d)
        vals = np.ones(exps.shape[0])
        for i, (a, b) in enumerate(zip(s.lower, s.upper)):
            e = exps[:, i] + 1
            vals *= (np.power(b, e) - np.power(a, e)) / e
        return MomentVector(n, d, vals)
    if isinstance(s, Ball):
        return MomentVector(n, d, _shift(n, d, _centered_ball_moments(n, d, s.radius), s.center))
    if isinstance(s, Annulus):
        m = _centered_ball_moments(n, d, s.r_out) - _centered_ball_moments(n, d, s.r_in)
        return MomentVector(n, d, _shift(n, d, m, s.center))
    if isinstance(s, Product):
        exps = basis_array(n, d)
        vals = np.ones(exps.shape[0])
        off = 0
        for f in s.factors:
            fm = lebesgue_moments(f, d, monte_carlo, samples, seed)
            lookup = {tuple(e): k for k, e in enumerate(basis_array(f.nvars, d).tolist())}
            idx = [lookup[tuple(e)] for e in exps[:, off : off + f.nvars].tolist()]
            vals *= fm.values[idx]
            off += f.nvars
        return MomentVector(n, d, vals)
    if not monte_carlo:
        raise RegionError(
            "no closed-form moments for this region; pass monte_carlo=True for a sampled estimate"
        )
    volume = estimate_volume(region, samples, seed)
    pts = sample_uniform(region, samples, seed)
    return MomentVector(n, d, volume * basis_eval_many(n, d, pts).mean(axis=0))


def volume(region: SemialgebraicSet) -> float:
    return lebesgue_moments(region, 0).mass


def estimate_volume(region: SemialgebraicSet, samples: int, seed: int) -> float:
    s = region.shape
    if isinstance(s, Difference):
        rng = np.random.default_rng(seed)
        pts = _sample(s.outer, samples, rng)
        frac = region.contains_shape(pts).mean()
        return estimate_volume(s.outer, samples, seed) * float(frac)
    return volume(region)


# -- sampling -----------------------------------------------------------------

MIN_ACCEPTANCE = 1e-3


def sample_uniform(region: SemialgebraicSet, n: int, seed: int | np.random.Generator) -> np.ndarray:
    """n points uniform on the region (on the surface for spheres)."""
    return _sample(region, n, np.random.default_rng(seed))


def _sample(region: SemialgebraicSet, n: int, rng: np.random.Generator) -> np.ndarray:
    s = region.shape
    d = region.nvars
    if isinstance(s, Box):
        return rng.uniform(np.array(s.lower), np.array(s.upper), size=(n, d))
    if isinstance(s, (Ball, Annulus, Sphere)):
        g = rng.standard_normal((n, d))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        if isinstance(s, Sphere):
            return np.array(s.center) + s.radius * g
        if isinstance(s, Ball):
            r = s.radius * rng.uniform(size=n) ** (1.0 / d)
        else:
            u = rng.uniform(size=n)
            r = (s.r_in**d + u * (s.r_out**d - s.r_in**d)) ** (1.0 / d)
        return np.array(s.center) + r[:, None] * g
    if isinstance(s, Point):
        return np.tile(np.array(s.z), (n, 1))
    if isinstance(s, Product):
        return np.hstack([_sample(f, n, rng) for f in s.factors])
    if isinstance(s, Difference):
        out = []
        got = 0
        drawn = 0
        batch = max(1024, 2 * n)
        while got < n:
            pts = _sample(s.outer, batch, rng)
            keep = pts[region.contains_shape(pts)]
            drawn += batch
            out.append(keep)
            got += keep.shape[0]
            if got < n and drawn >= 100_000 and got < MIN_ACCEPTANCE * drawn:
                raise RegionError("rejection sampling acceptance below 1e-3; region looks degenerate")
        return np.vstack(out)[:n]
    raise RegionError("sampling needs a box, ball, annulus, sphere, point, product or difference")
