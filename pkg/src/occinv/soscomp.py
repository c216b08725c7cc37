"""Compile polynomial positivity constraints into a linear/semidefinite program.

The main entry point is :func:`putinar_constrain`, which imposes that an
affine polynomial expression belongs to the truncated quadratic module

    Q_k(G) = { s_0 + sum_i s_i g_i + sum_j q_j h_j }

with SOS multipliers ``s_i`` of degree ``2 k_i``, ``k_i = k - ceil(deg g_i / 2)``,
and free multipliers ``q_j`` of degree ``2k - deg h_j``.  Each SOS multiplier
becomes a Gram block; the polynomial identity becomes one linear equality per
monomial of degree <= 2k.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .polynomials import (
    MonomialIndex,
    Polynomial,
    basis_array,
    basis_eval,
    basis_size,
    monomial_basis,
)


class ProgramError(ValueError):
    """Raised when a program cannot be assembled as requested."""


@dataclass
class PsdBlock:
    """Symmetric matrix variable; entry (i, j), i >= j, lives at ``start + t``."""

    size: int
    start: int
    tag: str = ""

    @property
    def nentries(self) -> int:
        return self.size * (self.size + 1) // 2

    def tril(self) -> tuple[np.ndarray, np.ndarray]:
        return np.tril_indices(self.size)

    def matrix(self, x: np.ndarray) -> np.ndarray:
        """Symmetric matrix from a full solution vector."""
        i, j = self.tril()
        S = np.zeros((self.size, self.size))
        vals = x[self.start : self.start + self.nentries]
        S[i, j] = vals
        S[j, i] = vals
        return S


class ConicProgram:
    """Linear objective over scalar variables, linear rows and PSD blocks.

    Equalities read ``A x = b``; inequalities read ``G x <= h``. Variables
    that belong to a PSD block may only appear in equality rows and the
    objective, which keeps the interior-point Newton system structured.
    """

    def __init__(self, name: str = "program"):
        self.name = name
        self.nvars = 0
        self.groups: list[tuple[str, int, int]] = []
        self.blocks: list[PsdBlock] = []
        self._eq: list[sp.coo_matrix] = []
        self._eq_rhs: list[np.ndarray] = []
        self._eq_tags: list[tuple[str, int, int]] = []
        self._ineq: list[sp.coo_matrix] = []
        self._ineq_rhs: list[np.ndarray] = []
        self._ineq_tags: list[tuple[str, int, int]] = []
        self._obj: dict[int, float] = {}
        self.obj_const = 0.0
        self.sense = "min"
        self._psd_mask: list[bool] = []

    # -- variables ----------------------------------------------------

    def add_variables(self, count: int, name: str = "x") -> np.ndarray:
        start = self.nvars
        self.nvars += count
        self.groups.append((name, start, count))
        self._psd_mask.extend([False] * count)
        return np.arange(start, start + count)

    def add_variable(self, name: str = "x") -> int:
        return int(self.add_variables(1, name)[0])

    def add_psd_block(self, size: int, tag: str = "S") -> PsdBlock:
        if size < 1:
            raise ProgramError("PSD block size must be positive")
        block = PsdBlock(size, self.nvars, tag)
        self.nvars += block.nentries
        self.groups.append((tag, block.start, block.nentries))
        self._psd_mask.extend([True] * block.nentries)
        self.blocks.append(block)
        return block

    @property
    def psd_mask(self) -> np.ndarray:
        return np.array(self._psd_mask, dtype=bool)

    # -- rows ---------------------------------------------------------

    def _check_cols(self, cols: np.ndarray) -> None:
        if cols.size and (cols.min() < 0 or cols.max() >= self.nvars):
            raise ProgramError("constraint references an undeclared variable")

    def add_equalities(self, mat, rhs, tag: str = "eq") -> tuple[int, int]:
        """Append rows ``mat @ x = rhs``; `mat` may have fewer columns than nvars."""
        mat = sp.coo_matrix(mat)
        rhs = np.asarray(rhs, dtype=float).reshape(-1)
        if mat.shape[0] != rhs.shape[0]:
            raise ProgramError("row count and right-hand side disagree")
        self._check_cols(mat.col)
        first = self.n_eq
        self._eq.append(mat)
        self._eq_rhs.append(rhs)
        self._eq_tags.append((tag, first, mat.shape[0]))
        return first, mat.shape[0]

    def add_equality(self, cols, vals, rhs: float, tag: str = "eq") -> int:
        cols = np.asarray(cols, dtype=np.int64)
        mat = sp.coo_matrix(
            (np.asarray(vals, dtype=float), (np.zeros(len(cols), dtype=np.int64), cols)),
            shape=(1, self.nvars),
        )
        return self.add_equalities(mat, [rhs], tag)[0]

    def add_inequalities(self, mat, rhs, tag: str = "ineq") -> tuple[int, int]:
        """Append rows ``mat @ x <= rhs``."""
        mat = sp.coo_matrix(mat)
        rhs = np.asarray(rhs, dtype=float).reshape(-1)
        if mat.shape[0] != rhs.shape[0]:
            raise ProgramError("row count and right-hand side disagree")
        self._check_cols(mat.col)
        mask = self.psd_mask
        if mat.nnz and mask[mat.col[mat.data != 0]].any():
            raise ProgramError("Gram entries may only appear in equality rows")
        first = self.n_ineq
        self._ineq.append(mat)
        self._ineq_rhs.append(rhs)
        self._ineq_tags.append((tag, first, mat.shape[0]))
        return first, mat.shape[0]

    def add_inequality(self, cols, vals, rhs: float, tag: str = "ineq") -> int:
        cols = np.asarray(cols, dtype=np.int64)
        mat = sp.coo_matrix(
            (np.asarray(vals, dtype=float), (np.zeros(len(cols), dtype=np.int64), cols)),
            shape=(1, self.nvars),
        )
        return self.add_inequalities(mat, [rhs], tag)[0]

    def add_objective(self, cols, vals) -> None:
        for c, v in zip(np.atleast_1d(cols), np.atleast_1d(vals)):
            self._obj[int(c)] = self._obj.get(int(c), 0.0) + float(v)

    def set_sense(self, sense: str) -> None:
        if sense not in ("min", "max"):
            raise ProgramError("sense must be 'min' or 'max'")
        self.sense = sense

    # -- assembled views ----------------------------------------------

    @property
    def n_eq(self) -> int:
        return sum(m.shape[0] for m in self._eq)

    @property
    def n_ineq(self) -> int:
        return sum(m.shape[0] for m in self._ineq)

    def _stack(self, mats, rhss) -> tuple[sp.csr_matrix, np.ndarray]:
        if not mats:
            return sp.csr_matrix((0, self.nvars)), np.zeros(0)
        rows, cols, vals = [], [], []
        offset = 0
        for m in mats:
            rows.append(m.row + offset)
            cols.append(m.col)
            vals.append(m.data)
            offset += m.shape[0]
        A = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(offset, self.nvars),
        ).tocsr()
        A.sum_duplicates()
        return A, np.concatenate(rhss)

    def equalities(self) -> tuple[sp.csr_matrix, np.ndarray]:
        return self._stack(self._eq, self._eq_rhs)

    def inequalities(self) -> tuple[sp.csr_matrix, np.ndarray]:
        return self._stack(self._ineq, self._ineq_rhs)

    def objective(self) -> np.ndarray:
        c = np.zeros(self.nvars)
        for i, v in self._obj.items():
            c[i] = v
        return c

    def objective_value(self, x: np.ndarray) -> float:
        return float(self.objective() @ x + self.obj_const)

    def equality_tags(self) -> list[tuple[str, int, int]]:
        return list(self._eq_tags)

    def inequality_tags(self) -> list[tuple[str, int, int]]:
        return list(self._ineq_tags)

    # -- debugging dump -----------------------------------------------

    def dump(self) -> str:
        """Sparse text form of the assembled program.

        Layout: a header line, one ``var`` line per variable group, one
        ``psd`` line per block, then ``obj``/``eq``/``le`` triplet sections
        with 0-based ``row col value`` lines followed by ``rhs`` lines.
        """
        A, b = self.equalities()
        G, h = self.inequalities()
        c = self.objective()
        out = [f"# program {self.name} sense={self.sense} nvars={self.nvars}"]
        for name, start, count in self.groups:
            out.append(f"var {name} {start} {count}")
        for blk in self.blocks:
            out.append(f"psd {blk.tag} size={blk.size} start={blk.start}")
        out.append(f"obj const={self.obj_const!r}")
        for i in np.flatnonzero(c):
            out.append(f"  {i} {c[i]!r}")
        for label, M, rhs in (("eq", A, b), ("le", G, h)):
            M = M.tocoo()
            out.append(f"{label} rows={M.shape[0]} nnz={M.nnz}")
            for r, col, v in zip(M.row, M.col, M.data):
                out.append(f"  {r} {col} {v!r}")
            for r, v in enumerate(rhs):
                if v != 0.0:
                    out.append(f"  rhs {r} {v!r}")
        return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# affine polynomial expressions


class AffinePolyExpr:
    """Polynomial whose coefficients are affine in program variables.

    Stored as a fixed polynomial plus sparse triplets ``(monomial, var, coef)``
    meaning ``coef * x[var] * z^monomial``.
    """

    def __init__(self, nvars: int, const: Polynomial | None = None,
                 exps: np.ndarray | None = None, var: np.ndarray | None = None,
                 coef: np.ndarray | None = None):
        self.nvars = nvars
        self.const = Polynomial.zero(nvars) if const is None else const
        if self.const.nvars != nvars:
            raise ProgramError("constant part has the wrong number of variables")
        self.exps = np.zeros((0, nvars), dtype=np.int64) if exps is None else np.asarray(exps, dtype=np.int64).reshape(-1, nvars)
        self.var = np.zeros(0, dtype=np.int64) if var is None else np.asarray(var, dtype=np.int64)
        self.coef = np.zeros(0) if coef is None else np.asarray(coef, dtype=float)

    @classmethod
    def constant(cls, p: Polynomial) -> "AffinePolyExpr":
        return cls(p.nvars, p)

    @classmethod
    def scalar_times(cls, var: int, p: Polynomial) -> "AffinePolyExpr":
        """``x[var] * p`` for a fixed polynomial p."""
        items = list(p.items())
        if not items:
            return cls(p.nvars)
        exps = np.array([k for k, _ in items], dtype=np.int64).reshape(-1, p.nvars)
        return cls(p.nvars, None, exps, np.full(len(items), var), np.array([c for _, c in items]))

    @property
    def degree(self) -> int:
        d = self.const.degree
        if self.exps.shape[0]:
            d = max(d, int(self.exps.sum(axis=1).max()))
        return d

    def __add__(self, other):
        if isinstance(other, Polynomial):
            return AffinePolyExpr(self.nvars, self.const + other, self.exps, self.var, self.coef)
        if isinstance(other, (int, float)):
            return self + Polynomial.constant(self.nvars, other)
        if not isinstance(other, AffinePolyExpr):
            return NotImplemented
        if other.nvars != self.nvars:
            raise ProgramError("expressions live in different variable spaces")
        return AffinePolyExpr(
            self.nvars,
            self.const + other.const,
            np.vstack([self.exps, other.exps]),
            np.concatenate([self.var, other.var]),
            np.concatenate([self.coef, other.coef]),
        )

    __radd__ = __add__

    def scale(self, r: float) -> "AffinePolyExpr":
        return AffinePolyExpr(self.nvars, self.const.scale(r), self.exps, self.var, self.coef * r)

    def __neg__(self):
        return self.scale(-1.0)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def coefficient_matrix(self, index: MonomialIndex, ncols: int) -> tuple[np.ndarray, sp.csr_matrix]:
        """(c0, L) with coefficient vector ``c0 + L @ x`` in the basis of `index`."""
        if self.degree > index.degree:
            raise ProgramError(f"expression degree {self.degree} exceeds {index.degree}")
        c0 = np.zeros(len(index))
        items = list(self.const.items())
        if items:
            rows = index.lookup(np.array([k for k, _ in items]))
            np.add.at(c0, rows, [c for _, c in items])
        rows = index.lookup(self.exps) if self.exps.shape[0] else np.zeros(0, dtype=np.int64)
        L = sp.coo_matrix((self.coef, (rows, self.var)), shape=(len(index), ncols)).tocsr()
        L.sum_duplicates()
        return c0, L

    def linear_form(self, weights: np.ndarray, degree: int) -> tuple[float, dict[int, float]]:
        """Apply a functional given by weights on the graded-lex basis of `degree`.

        Returns ``(constant, {var: coef})`` so that the functional equals
        ``constant + sum coef * x[var]``.
        """
        index = MonomialIndex(self.nvars, degree)
        weights = np.asarray(weights, dtype=float)
        if weights.shape[0] != len(index):
            raise ProgramError("weights do not match the basis size")
        const = 0.0
        for k, c in self.const.items():
            const += c * weights[index.lookup(np.array(k))[0]]
        out: dict[int, float] = {}
        if self.exps.shape[0]:
            w = weights[index.lookup(self.exps)] * self.coef
            for v, val in zip(self.var.tolist(), w.tolist()):
                out[v] = out.get(v, 0.0) + val
        return const, out

    def value(self, x: np.ndarray) -> Polynomial:
        """Substitute numeric variable values."""
        terms: dict[tuple, float] = {}
        for e, v, c in zip(map(tuple, self.exps.tolist()), self.var.tolist(), self.coef.tolist()):
            terms[e] = terms.get(e, 0.0) + c * float(x[v])
        return self.const + Polynomial(self.nvars, terms)


@dataclass
class PolyVariable:
    """Polynomial with unknown coefficients, one program variable per basis monomial.

    With ``factor`` set, the polynomial is ``factor * q`` where q carries the
    unknown coefficients (used to force vanishing on a variety).
    """

    nvars: int
    degree: int
    vars: np.ndarray
    factor: Polynomial | None = None

    @classmethod
    def declare(cls, prog: ConicProgram, nvars: int, degree: int, name: str,
                factor: Polynomial | None = None) -> "PolyVariable":
        if degree < 0:
            raise ProgramError(f"{name}: negative degree")
        vars_ = prog.add_variables(basis_size(nvars, degree), name)
        return cls(nvars, degree, vars_, factor)

    @property
    def full_degree(self) -> int:
        return self.degree + (self.factor.degree if self.factor is not None else 0)

    def basis_polys(self) -> list[Polynomial]:
        out = []
        for e in monomial_basis(self.nvars, self.degree):
            m = Polynomial.monomial(e)
            out.append(m * self.factor if self.factor is not None else m)
        return out

    def expr(self, nvars: int | None = None) -> AffinePolyExpr:
        """As an expression, optionally embedded into the first variables of a larger space."""
        target = self.nvars if nvars is None else nvars
        exps, var, coef = [], [], []
        for p, v in zip(self.basis_polys(), self.vars.tolist()):
            for k, c in p.embed(target).items():
                exps.append(k)
                var.append(v)
                coef.append(c)
        return AffinePolyExpr(target, None, np.array(exps, dtype=np.int64).reshape(-1, target),
                              np.array(var, dtype=np.int64), np.array(coef))

    def dot_dynamics(self, f: Sequence[Polynomial]) -> AffinePolyExpr:
        """The expression grad(p) . f over the joint variables of f."""
        from .polynomials import dot_dynamics

        joint = f[0].nvars
        exps, var, coef = [], [], []
        for p, v in zip(self.basis_polys(), self.vars.tolist()):
            q = dot_dynamics(p, f)
            for k, c in q.items():
                exps.append(k)
                var.append(v)
                coef.append(c)
        return AffinePolyExpr(joint, None, np.array(exps, dtype=np.int64).reshape(-1, joint),
                              np.array(var, dtype=np.int64), np.array(coef))

    def value(self, x: np.ndarray) -> Polynomial:
        q = Polynomial.from_coeffs(self.nvars, self.degree, x[self.vars])
        return q * self.factor if self.factor is not None else q

    def eval_row(self, z: Sequence[float]) -> np.ndarray:
        """Coefficients c with p(z) = c @ x[vars]."""
        row = basis_eval(self.nvars, self.degree, z)
        if self.factor is not None:
            row = row * self.factor.evaluate(z)
        return row


# ---------------------------------------------------------------------------
# Putinar constraints


@dataclass
class PutinarHandle:
    """Bookkeeping needed to read a certificate back from a solution."""

    expr: AffinePolyExpr
    nvars: int
    k: int
    blocks: list[PsdBlock]
    multipliers: list[Polynomial]       # weight of each block: 1, g_1, ..., g_m
    block_degrees: list[int]            # basis degree k_i of each block
    free: list[PolyVariable]            # free multipliers of the equalities
    equalities: list[Polynomial]
    rows: tuple[int, int]


@dataclass
class GramCertificate:
    """Numeric Putinar certificate ``sum_i b_i' S_i b_i g_i + sum_j q_j h_j``."""

    nvars: int
    k: int
    grams: list[np.ndarray]
    multipliers: list[Polynomial]
    block_degrees: list[int]
    free_multipliers: list[Polynomial] = field(default_factory=list)
    equalities: list[Polynomial] = field(default_factory=list)
    target: Polynomial | None = None

    def reconstruct(self) -> Polynomial:
        total = Polynomial.zero(self.nvars)
        for S, g, d in zip(self.grams, self.multipliers, self.block_degrees):
            total = total + gram_polynomial(S, self.nvars, d) * g
        for q, h in zip(self.free_multipliers, self.equalities):
            total = total + q * h
        return total

    def to_json(self) -> dict:
        return {
            "nvars": self.nvars,
            "k": self.k,
            "grams": [S.tolist() for S in self.grams],
            "multipliers": [g.to_json() for g in self.multipliers],
            "block_degrees": list(self.block_degrees),
            "free_multipliers": [q.to_json() for q in self.free_multipliers],
            "equalities": [h.to_json() for h in self.equalities],
        }


@dataclass
class CertificateReport:
    min_eig: float
    residual: float
    eig_tol: float
    residual_tol: float

    @property
    def ok(self) -> bool:
        return self.min_eig >= -self.eig_tol and self.residual <= self.residual_tol

    def to_json(self) -> dict:
        return {"min_eig": self.min_eig, "residual": self.residual, "ok": self.ok}


def gram_polynomial(S: np.ndarray, nvars: int, degree: int) -> Polynomial:
    """b(z)' S b(z) with b the graded-lex basis of the given degree."""
    basis = monomial_basis(nvars, degree)
    if S.shape != (len(basis), len(basis)):
        raise ProgramError("Gram matrix size does not match its basis")
    terms: dict[tuple, float] = {}
    for a, ea in enumerate(basis):
        for c, ec in enumerate(basis):
            if S[a, c] != 0.0:
                e = tuple(x + y for x, y in zip(ea, ec))
                terms[e] = terms.get(e, 0.0) + float(S[a, c])
    return Polynomial(nvars, terms)


def _gram_map(nvars: int, degree: int, weight: Polynomial, index: MonomialIndex) -> sp.coo_matrix:
    """Sparse map from lower-triangle Gram entries to coefficients of weight * b'Sb."""
    exps = basis_array(nvars, degree)
    s = exps.shape[0]
    i, j = np.tril_indices(s)
    pair = exps[i] + exps[j]
    mult = np.where(i == j, 1.0, 2.0)
    rows, cols, vals = [], [], []
    t = np.arange(i.shape[0])
    for ge, gc in weight.items():
        shifted = pair + np.array(ge, dtype=np.int64)
        rows.append(index.lookup(shifted))
        cols.append(t)
        vals.append(mult * gc)
    return sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(len(index), i.shape[0]),
    )


def putinar_constrain(prog: ConicProgram, expr: AffinePolyExpr, G, k: int,
                      allow_non_archimedean: bool = False, tag: str = "putinar") -> PutinarHandle:
    """Impose ``expr`` in Q_k(G) and return a handle for certificate extraction."""
    n = expr.nvars
    if G.nvars != n:
        raise ProgramError(f"set has {G.nvars} variables, expression has {n}")
    if k < 0:
        raise ProgramError("k must be non-negative")
    if expr.degree > 2 * k:
        raise ProgramError(f"expression degree {expr.degree} exceeds 2k = {2 * k}")
    if not G.archimedean and not allow_non_archimedean:
        raise ProgramError("set is not flagged Archimedean; pass allow_non_archimedean to override")
    index = MonomialIndex(n, 2 * k)
    nrows = len(index)

    blocks, weights, degrees, pieces = [], [], [], []
    for g in [Polynomial.constant(n, 1.0)] + list(G.ineqs):
        ki = k - math.ceil(max(g.degree, 0) / 2)
        if ki < 0:
            continue
        blk = prog.add_psd_block(basis_size(n, ki), f"{tag}.S{len(blocks)}")
        M = _gram_map(n, ki, g, index)
        pieces.append(sp.coo_matrix((M.data, (M.row, M.col + blk.start)), shape=(nrows, prog.nvars)))
        blocks.append(blk)
        weights.append(g)
        degrees.append(ki)

    free, eqs = [], []
    for j, h in enumerate(G.eqs):
        dq = 2 * k - h.degree
        if dq < 0:
            continue
        q = PolyVariable.declare(prog, n, dq, f"{tag}.q{j}", factor=h)
        c0, L = q.expr().coefficient_matrix(index, prog.nvars)
        pieces.append(L.tocoo())
        free.append(q)
        eqs.append(h)

    c0, L = expr.coefficient_matrix(index, prog.nvars)
    pieces.append(-L.tocoo())
    rows, cols, vals = [], [], []
    for p in pieces:
        p = p.tocoo()
        rows.append(p.row)
        cols.append(p.col)
        vals.append(p.data)
    A = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(nrows, prog.nvars),
    )
    first, count = prog.add_equalities(A, c0, tag)
    return PutinarHandle(expr, n, k, blocks, weights, degrees, free, eqs, (first, count))


def l1_lift(prog: ConicProgram, coeff_vars: Sequence[int], lam: float,
            tag: str = "l1") -> np.ndarray:
    """Add ``lam * ||c||_1`` to a minimization objective via slacks ``s >= |c|``.

    Returns the slack indices (empty when lam is zero, since the term vanishes).
    """
    if lam < 0:
        raise ProgramError("regularization weight must be non-negative")
    if prog.sense != "min":
        raise ProgramError("l1 lifting requires a minimization objective")
    coeff_vars = np.asarray(coeff_vars, dtype=np.int64)
    if lam == 0.0 or coeff_vars.size == 0:
        return np.zeros(0, dtype=np.int64)
    s = prog.add_variables(coeff_vars.size, f"{tag}.slack")
    m = coeff_vars.size
    r = np.arange(m)
    # c - s <= 0 and -c - s <= 0
    rows = np.concatenate([r, r, m + r, m + r])
    cols = np.concatenate([coeff_vars, s, coeff_vars, s])
    vals = np.concatenate([np.ones(m), -np.ones(m), -np.ones(m), -np.ones(m)])
    prog.add_inequalities(sp.coo_matrix((vals, (rows, cols)), shape=(2 * m, prog.nvars)),
                          np.zeros(2 * m), tag)
    prog.add_objective(s, np.full(m, lam))
    return s


def extract_certificate(handle: PutinarHandle, solution) -> GramCertificate:
    """Read Gram blocks and free multipliers out of a solved program.

    Interior point solutions offer two readings of each Gram block: the
    variables themselves (exact reconstruction, possibly slightly indefinite)
    and the cone slacks (PSD, off by the primal residual).  The reading with
    the larger margin under the verification tolerances is returned.
    """
    if not isinstance(handle, PutinarHandle):
        raise ProgramError("unknown constraint handle")
    if solution.status != "optimal":
        raise ProgramError(f"cannot extract a certificate from a {solution.status} solution")
    x = solution.x
    free = [Polynomial.from_coeffs(q.nvars, q.degree, x[q.vars]) for q in handle.free]

    def build(grams):
        return GramCertificate(
            nvars=handle.nvars,
            k=handle.k,
            grams=grams,
            multipliers=list(handle.multipliers),
            block_degrees=list(handle.block_degrees),
            free_multipliers=free,
            equalities=list(handle.equalities),
            target=handle.expr.value(x),
        )

    cert = build([blk.matrix(x) for blk in handle.blocks])
    slacks = getattr(solution, "psd_primal", {})
    if not handle.blocks or not all(blk.start in slacks for blk in handle.blocks):
        return cert
    alt = build([slacks[blk.start] for blk in handle.blocks])

    def worst(c):
        rep = verify_certificate(c)
        return max(-rep.min_eig / rep.eig_tol, rep.residual / rep.residual_tol)

    return alt if worst(alt) < worst(cert) else cert


def verify_certificate(cert: GramCertificate, target: Polynomial | None = None,
                       eig_tol: float = 1e-8, residual_tol: float = 1e-7) -> CertificateReport:
    """Recompute minimum Gram eigenvalue and the coefficient reconstruction error."""
    target = cert.target if target is None else target
    if target is None:
        raise ProgramError("no target polynomial to verify against")
    min_eig = min((float(np.linalg.eigvalsh(S)[0]) for S in cert.grams), default=0.0)
    diff = cert.reconstruct() - target
    residual = max((abs(c) for _, c in diff.items()), default=0.0)
    return CertificateReport(min_eig, float(residual), eig_tol, residual_tol)
