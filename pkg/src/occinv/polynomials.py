"""Sparse multivariate polynomials with real coefficients.

Every coefficient vector, moment vector and Gram index in the package uses
the same graded-lex monomial order: increasing total degree, and within a
degree, exponent tuples in decreasing lexicographic order (so ``x1`` comes
before ``x2`` and ``x1^2`` before ``x1*x2``).

Joint state/control spaces put the state variables first.
"""

from __future__ import annotations

import json
import math
import re
from functools import lru_cache
from typing import Iterable, Mapping, Sequence

import numpy as np

Exponents = tuple[int, ...]


def grlex_key(exps: Exponents) -> tuple:
    return (sum(exps), tuple(-e for e in exps))


@lru_cache(maxsize=None)
def monomial_basis(nvars: int, degree: int) -> tuple[Exponents, ...]:
    """All exponent tuples of total degree <= `degree`, in graded-lex order."""
    if degree < 0:
        return ()
    out: list[Exponents] = []

    def rec(prefix: list[int], remaining: int, slots: int) -> Iterable[Exponents]:
        if slots == 1:
            yield tuple(prefix + [remaining])
            return
        for e in range(remaining, -1, -1):
            yield from rec(prefix + [e], remaining - e, slots - 1)

    for t in range(degree + 1):
        if nvars == 0:
            if t == 0:
                out.append(())
            continue
        out.extend(rec([], t, nvars))
    return tuple(out)


def basis_size(nvars: int, degree: int) -> int:
    if degree < 0:
        return 0
    return math.comb(nvars + degree, degree)


@lru_cache(maxsize=None)
def basis_index(nvars: int, degree: int) -> dict[Exponents, int]:
    return {e: i for i, e in enumerate(monomial_basis(nvars, degree))}


@lru_cache(maxsize=None)
def basis_array(nvars: int, degree: int) -> np.ndarray:
    arr = np.array(monomial_basis(nvars, degree), dtype=np.int64)
    arr.setflags(write=False)
    return arr.reshape(-1, nvars)


def basis_eval(nvars: int, degree: int, z: Sequence[float]) -> np.ndarray:
    """Vector of basis monomials evaluated at one point."""
    z = np.asarray(z, dtype=float).reshape(-1)
    if z.shape[0] != nvars:
        raise ValueError(f"point has dimension {z.shape[0]}, expected {nvars}")
    return basis_eval_many(nvars, degree, z[None, :])[0]


def basis_eval_many(nvars: int, degree: int, points: np.ndarray) -> np.ndarray:
    """Matrix with one row of basis monomial values per point."""
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[1] != nvars:
        raise ValueError(f"points must have shape (N, {nvars})")
    exps = basis_array(nvars, degree)
    # powers[i, j, e] = points[i, j] ** e
    powers = np.ones((points.shape[0], nvars, degree + 1))
    for e in range(1, degree + 1):
        powers[:, :, e] = powers[:, :, e - 1] * points
    out = np.ones((points.shape[0], exps.shape[0]))
    for j in range(nvars):
        out *= powers[:, j, exps[:, j]]
    return out


class MonomialIndex:
    """Fast vectorized lookup of exponent rows into a graded-lex basis."""

    def __init__(self, nvars: int, degree: int):
        self.nvars = nvars
        self.degree = degree
        self.base = degree + 1
        exps = basis_array(nvars, degree)
        codes = self.encode(exps)
        self._order = np.argsort(codes)
        self._sorted = codes[self._order]

    def __len__(self) -> int:
        return self._sorted.shape[0]

    def encode(self, exps: np.ndarray) -> np.ndarray:
        exps = np.asarray(exps, dtype=np.int64).reshape(-1, self.nvars)
        weights = self.base ** np.arange(self.nvars, dtype=np.int64)
        return exps @ weights

    def lookup(self, exps: np.ndarray) -> np.ndarray:
        exps = np.asarray(exps, dtype=np.int64).reshape(-1, self.nvars)
        if exps.size and (exps.sum(axis=1).max() > self.degree or exps.min() < 0):
            raise KeyError("monomial outside the indexed basis")
        pos = np.searchsorted(self._sorted, self.encode(exps))
        return self._order[pos]


class Polynomial:
    """Immutable sparse polynomial in `nvars` variables.

    Terms are stored as a mapping from exponent tuples to float coefficients;
    zero coefficients are never stored.
    """

    __slots__ = ("nvars", "_terms")

    def __init__(self, nvars: int, terms: Mapping[Sequence[int], float] | None = None):
        if nvars < 0:
            raise ValueError("nvars must be non-negative")
        clean: dict[Exponents, float] = {}
        for exps, c in (terms or {}).items():
            key = tuple(int(e) for e in exps)
            if len(key) != nvars:
                raise ValueError(f"monomial {key} has length {len(key)}, expected {nvars}")
            if any(e < 0 for e in key):
                raise ValueError(f"negative exponent in {key}")
            c = float(c)
            if c != 0.0:
                clean[key] = clean.get(key, 0.0) + c
        object.__setattr__(self, "nvars", nvars)
        object.__setattr__(
            self, "_terms", {k: clean[k] for k in sorted(clean, key=grlex_key) if clean[k] != 0.0}
        )

    def __setattr__(self, name, value):
        raise AttributeError("Polynomial is immutable")

    def __reduce__(self):
        return (Polynomial, (self.nvars, self._terms))

    # -- constructors -------------------------------------------------

    @classmethod
    def zero(cls, nvars: int) -> "Polynomial":
        return cls(nvars)

    @classmethod
    def constant(cls, nvars: int, c: float) -> "Polynomial":
        return cls(nvars, {(0,) * nvars: c})

    @classmethod
    def variable(cls, nvars: int, i: int) -> "Polynomial":
        if not 0 <= i < nvars:
            raise IndexError(f"variable index {i} out of range for {nvars} variables")
        e = [0] * nvars
        e[i] = 1
        return cls(nvars, {tuple(e): 1.0})

    @classmethod
    def variables(cls, nvars: int) -> list["Polynomial"]:
        return [cls.variable(nvars, i) for i in range(nvars)]

    @classmethod
    def monomial(cls, exps: Sequence[int], coef: float = 1.0) -> "Polynomial":
        return cls(len(exps), {tuple(exps): coef})

    @classmethod
    def from_coeffs(cls, nvars: int, degree: int, coeffs: Sequence[float]) -> "Polynomial":
        basis = monomial_basis(nvars, degree)
        coeffs = np.asarray(coeffs, dtype=float).reshape(-1)
        if coeffs.shape[0] != len(basis):
            raise ValueError(f"expected {len(basis)} coefficients, got {coeffs.shape[0]}")
        return cls(nvars, dict(zip(basis, coeffs.tolist())))

    # -- accessors ----------------------------------------------------

    @property
    def terms(self) -> dict[Exponents, float]:
        return dict(self._terms)

    def items(self):
        return self._terms.items()

    def coeff(self, exps: Sequence[int]) -> float:
        return self._terms.get(tuple(exps), 0.0)

    @property
    def degree(self) -> int:
        """Total degree; -1 for the zero polynomial."""
        if not self._terms:
            return -1
        return max(sum(e) for e in self._terms)

    def degree_in(self, indices: Iterable[int]) -> int:
        idx = list(indices)
        if not self._terms:
            return -1
        return max(sum(e[i] for i in idx) for e in self._terms)

    def is_zero(self) -> bool:
        return not self._terms

    def __len__(self) -> int:
        return len(self._terms)

    # -- arithmetic ---------------------------------------------------

    def _coerce(self, other) -> "Polynomial":
        if isinstance(other, Polynomial):
            if other.nvars != self.nvars:
                raise ValueError(f"dimension mismatch: {self.nvars} vs {other.nvars} variables")
            return other
        if isinstance(other, (int, float, np.floating, np.integer)):
            return Polynomial.constant(self.nvars, float(other))
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        out = dict(self._terms)
        for k, c in other._terms.items():
            out[k] = out.get(k, 0.0) + c
        return Polynomial(self.nvars, out)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(self.nvars, {k: -c for k, c in self._terms.items()})

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return other - self

    def __mul__(self, other):
        if isinstance(other, (int, float, np.floating, np.integer)):
            return self.scale(float(other))
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        out: dict[Exponents, float] = {}
        for ka, ca in self._terms.items():
            for kb, cb in other._terms.items():
                k = tuple(a + b for a, b in zip(ka, kb))
                out[k] = out.get(k, 0.0) + ca * cb
        return Polynomial(self.nvars, out)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, (int, float, np.floating, np.integer)):
            return self.scale(1.0 / float(other))
        return NotImplemented

    def __pow__(self, n: int):
        if not isinstance(n, (int, np.integer)) or n < 0:
            raise ValueError("only non-negative integer powers are supported")
        result = Polynomial.constant(self.nvars, 1.0)
        base = self
        while n:
            if n & 1:
                result = result * base
            base = base * base
            n >>= 1
        return result

    def scale(self, r: float) -> "Polynomial":
        return Polynomial(self.nvars, {k: c * r for k, c in self._terms.items()})

    def __eq__(self, other):
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.nvars == other.nvars and self._terms == other._terms

    def __hash__(self):
        return hash((self.nvars, tuple(self._terms.items())))

    def allclose(self, other: "Polynomial", atol: float = 1e-12) -> bool:
        diff = self - other
        return all(abs(c) <= atol for _, c in diff.items())

    # -- calculus -----------------------------------------------------

    def derivative(self, i: int) -> "Polynomial":
        if not 0 <= i < self.nvars:
            raise IndexError(f"variable index {i} out of range")
        out = {}
        for k, c in self._terms.items():
            if k[i]:
                nk = list(k)
                nk[i] -= 1
                out[tuple(nk)] = c * k[i]
        return Polynomial(self.nvars, out)

    def gradient(self, indices: Iterable[int] | None = None) -> list["Polynomial"]:
        idx = range(self.nvars) if indices is None else list(indices)
        return [self.derivative(i) for i in idx]

    # -- variable maps ------------------------------------------------

    def embed(self, nvars: int, positions: Sequence[int] | None = None) -> "Polynomial":
        """Re-express in a larger variable space; variable i goes to positions[i]."""
        positions = list(range(self.nvars)) if positions is None else list(positions)
        if len(positions) != self.nvars:
            raise ValueError("positions must list one target index per variable")
        out = {}
        for k, c in self._terms.items():
            nk = [0] * nvars
            for e, p in zip(k, positions):
                nk[p] += e
            out[tuple(nk)] = c
        return Polynomial(nvars, out)

    def restrict(self, keep: Sequence[int]) -> "Polynomial":
        """Drop variables not in `keep`; they must not appear in any term."""
        keep = list(keep)
        dropped = [i for i in range(self.nvars) if i not in keep]
        out = {}
        for k, c in self._terms.items():
            if any(k[i] for i in dropped):
                raise ValueError("polynomial depends on a dropped variable")
            out[tuple(k[i] for i in keep)] = c
        return Polynomial(len(keep), out)

    # -- evaluation ---------------------------------------------------

    def __call__(self, z) -> float:
        return self.evaluate(z)

    def evaluate(self, z: Sequence[float]) -> float:
        z = np.asarray(z, dtype=float).reshape(-1)
        if z.shape[0] != self.nvars:
            raise ValueError(f"point has dimension {z.shape[0]}, expected {self.nvars}")
        total = 0.0
        for k, c in self._terms.items():
            term = c
            for zi, e in zip(z, k):
                if e:
                    term *= zi**e
            total += term
        return float(total)

    def evaluate_many(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        if points.ndim != 2 or points.shape[1] != self.nvars:
            raise ValueError(f"points must have shape (N, {self.nvars})")
        if not self._terms:
            return np.zeros(points.shape[0])
        exps = np.array(list(self._terms), dtype=np.int64).reshape(-1, self.nvars)
        coefs = np.array(list(self._terms.values()))
        vals = np.ones((points.shape[0], exps.shape[0]))
        for j in range(self.nvars):
            col = exps[:, j]
            if col.any():
                vals *= points[:, j][:, None] ** col[None, :]
        return vals @ coefs

    # -- coefficient vectors and norms --------------------------------

    def coeff_vector(self, degree: int | None = None) -> np.ndarray:
        d = self.degree if degree is None else degree
        if self.degree > d:
            raise ValueError(f"polynomial degree {self.degree} exceeds bound {d}")
        idx = basis_index(self.nvars, max(d, 0))
        out = np.zeros(basis_size(self.nvars, max(d, 0)))
        for k, c in self._terms.items():
            out[idx[k]] = c
        return out

    def norm1(self) -> float:
        return float(sum(abs(c) for c in self._terms.values()))

    def norm2(self) -> float:
        return float(math.sqrt(sum(c * c for c in self._terms.values())))

    def inner(self, other: "Polynomial") -> float:
        if other.nvars != self.nvars:
            raise ValueError("dimension mismatch")
        return float(sum(c * other._terms.get(k, 0.0) for k, c in self._terms.items()))

    # -- serialization ------------------------------------------------

    def to_text(self, names: Sequence[str] | None = None) -> str:
        names = default_names(self.nvars) if names is None else list(names)
        if not self._terms:
            return "0"
        parts = []
        for k, c in self._terms.items():
            factors = [repr(c)]
            for name, e in zip(names, k):
                if e == 1:
                    factors.append(name)
                elif e > 1:
                    factors.append(f"{name}^{e}")
            parts.append(" * ".join(factors))
        return " + ".join(parts)

    @classmethod
    def from_text(cls, text: str, names: Sequence[str]) -> "Polynomial":
        names = list(names)
        lookup = {n: i for i, n in enumerate(names)}
        text = text.strip()
        if text == "0":
            return cls(len(names))
        terms: dict[Exponents, float] = {}
        for sign, chunk in _split_terms(text):
            if not chunk:
                raise ValueError(f"malformed polynomial {text!r}")
            coef = sign
            exps = [0] * len(names)
            for factor in (f.strip() for f in chunk.split("*")):
                if not factor:
                    raise ValueError(f"malformed term {chunk!r}")
                m = re.fullmatch(r"([A-Za-z_][A-Za-z_0-9]*)(?:\^(\d+))?", factor)
                if m and m.group(1) in lookup:
                    exps[lookup[m.group(1)]] += int(m.group(2) or 1)
                else:
                    try:
                        coef *= float(factor)
                    except ValueError:
                        raise ValueError(f"unknown factor {factor!r}") from None
            key = tuple(exps)
            terms[key] = terms.get(key, 0.0) + coef
        return cls(len(names), terms)

    def to_json(self) -> dict:
        return {
            "nvars": self.nvars,
            "terms": [{"exps": list(k), "coef": c} for k, c in self._terms.items()],
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "Polynomial":
        nvars = int(data["nvars"])
        terms: dict[Exponents, float] = {}
        for t in data["terms"]:
            key = tuple(int(e) for e in t["exps"])
            terms[key] = terms.get(key, 0.0) + float(t["coef"])
        return cls(nvars, terms)

    def dumps(self) -> str:
        return json.dumps(self.to_json())

    def __repr__(self) -> str:
        return f"Polynomial({self.nvars}, {self.to_text()!r})"


def _split_terms(text: str) -> list[tuple[float, str]]:
    """Split on binary '+'/'-', leaving exponent signs (1e-05) and factor signs (x * -2) alone."""
    out, sign, start, prev = [], 1.0, 0, ""
    i = 0
    while i < len(text):
        ch = text[i]
        if ch in "+-":
            exp_sign = prev in "eE" and i >= 2 and (text[i - 2].isdigit() or text[i - 2] == ".")
            if prev == "" or prev in "*^" or exp_sign:
                if prev == "" and not text[start:i].strip():
                    sign = -sign if ch == "-" else sign
                    start = i + 1
                i += 1
                prev = ch if not exp_sign else prev + ch
                continue
            out.append((sign, text[start:i].strip()))
            sign, start, prev = (-1.0 if ch == "-" else 1.0), i + 1, ""
            i += 1
            continue
        if not ch.isspace():
            prev = ch
        i += 1
    out.append((sign, text[start:].strip()))
    return out


def default_names(nvars: int, n_state: int | None = None) -> list[str]:
    """Variable names: x1..x{dX} then u1..u{dU}; z1..zn when no split is given."""
    if n_state is None:
        return [f"z{i + 1}" for i in range(nvars)]
    return [f"x{i + 1}" for i in range(n_state)] + [
        f"u{i + 1}" for i in range(nvars - n_state)
    ]


def dot_dynamics(v: Polynomial, f: Sequence[Polynomial]) -> Polynomial:
    """sum_i dv/dx_i * f_i, with v over the state and f over (state, control)."""
    f = list(f)
    if len(f) != v.nvars:
        raise ValueError(f"dynamics has {len(f)} components, state has {v.nvars} variables")
    if not f:
        raise ValueError("empty dynamics")
    joint = f[0].nvars
    if any(fi.nvars != joint for fi in f):
        raise ValueError("dynamics components disagree on the number of variables")
    if joint < v.nvars:
        raise ValueError("dynamics must be expressed over state and control variables")
    out = Polynomial.zero(joint)
    for i, fi in enumerate(f):
        dv = v.derivative(i)
        if not dv.is_zero():
            out = out + dv.embed(joint) * fi
    return out


def sum_of_squares(nvars: int, indices: Iterable[int] | None = None) -> Polynomial:
    """sum z_i^2 over the given indices."""
    idx = range(nvars) if indices is None else indices
    out = Polynomial.zero(nvars)
    for i in idx:
        out = out + Polynomial.variable(nvars, i) ** 2
    return out
