"""Empirical occupation measures built from sampled state/control pairs."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .polynomials import Polynomial, basis_eval_many
from .semialgebraic import DEFAULT_TAU, SemialgebraicSet, sample_uniform


class DatasetError(ValueError):
    """Malformed, empty or out-of-set trajectory data."""


@dataclass(frozen=True)
class EmpiricalMoments:
    degree: int
    joint: np.ndarray
    terminal: np.ndarray | None = None


@dataclass(frozen=True)
class TrajectoryDataset:
    """Points ``(x_i, u_i)`` stored row-wise as ``[x | u]``."""

    dx: int
    du: int
    points: np.ndarray
    terminal: np.ndarray | None = None
    mass: float = 1.0
    seed: int | None = None
    generator: str = ""
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != self.dx + self.du:
            raise DatasetError(f"points must have {self.dx + self.du} columns")
        if pts.shape[0] < 1:
            raise DatasetError("dataset is empty")
        if not self.mass > 0:
            raise DatasetError("mass must be positive")
        object.__setattr__(self, "points", pts)
        if self.terminal is not None:
            term = np.asarray(self.terminal, dtype=float).reshape(-1, self.dx)
            object.__setattr__(self, "terminal", term)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def states(self) -> np.ndarray:
        return self.points[:, : self.dx]

    @property
    def controls(self) -> np.ndarray:
        return self.points[:, self.dx :]

    def moments(self, degree: int) -> EmpiricalMoments:
        term = None
        if self.terminal is not None and self.terminal.shape[0]:
            term = basis_eval_many(self.dx, degree, self.terminal).mean(axis=0)
        return EmpiricalMoments(degree, empirical_moments(self, degree), term)

    def duplicated(self, times: int = 2) -> "TrajectoryDataset":
        term = None if self.terminal is None else np.tile(self.terminal, (times, 1))
        return TrajectoryDataset(self.dx, self.du, np.tile(self.points, (times, 1)), term,
                                 self.mass, self.seed, self.generator)

    def validate(self, X: SemialgebraicSet, U: SemialgebraicSet, X_T: SemialgebraicSet | None = None,
                 tau: float = DEFAULT_TAU) -> None:
        if X.nvars != self.dx or U.nvars != self.du:
            raise DatasetError("set dimensions do not match the dataset")
        ok = X.contains_many(self.states, tau) & U.contains_many(self.controls, tau)
        bad = np.flatnonzero(~ok)
        if bad.size:
            rows = ", ".join(str(r + 1) for r in bad[:10])
            raise DatasetError(f"points outside X x U at data row(s) {rows}")
        if X_T is not None and self.terminal is not None and self.terminal.shape[0]:
            bad = np.flatnonzero(~X_T.contains_many(self.terminal, tau))
            if bad.size:
                rows = ", ".join(str(r + 1) for r in bad[:10])
                raise DatasetError(f"terminal points outside X_T at row(s) {rows}")


def empirical_moments(D: TrajectoryDataset, degree: int) -> np.ndarray:
    """Average of the joint monomial vector over the data."""
    return basis_eval_many(D.dx + D.du, degree, D.points).mean(axis=0)


def empirical_functional(D: TrajectoryDataset, p: Polynomial) -> float:
    """``(1/n) sum_i p(x_i, u_i)``."""
    if p.nvars != D.dx + D.du:
        raise DatasetError(f"polynomial has {p.nvars} variables, data has {D.dx + D.du}")
    return float(np.mean(p.evaluate_many(D.points)))


# -- files ----------------------------------------------------------------------

def _companions(path: Path) -> tuple[Path, Path]:
    return path.with_name(path.stem + "_terminal.csv"), path.with_suffix(".json")


def save_dataset(D: TrajectoryDataset, path) -> Path:
    """Write the CSV plus optional terminal file and JSON sidecar."""
    path = Path(path)
    header = [f"x{i + 1}" for i in range(D.dx)] + [f"u{i + 1}" for i in range(D.du)]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in D.points:
            w.writerow([repr(float(c)) for c in row])
    term_path, side_path = _companions(path)
    if D.terminal is not None:
        with term_path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"xT{i + 1}" for i in range(D.dx)])
            for row in D.terminal:
                w.writerow([repr(float(c)) for c in row])
    side = {"mass": D.mass, "seed": D.seed, "generator": D.generator}
    side_path.write_text(json.dumps(side, indent=2) + "\n")
    return path


def _read_csv(path: Path, prefixes: tuple[str, ...]) -> tuple[list[str], np.ndarray]:
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if r and any(c.strip() for c in r)]
    if not rows:
        raise DatasetError(f"{path}: empty file")
    header = [c.strip() for c in rows[0]]
    for c in header:
        if not c.startswith(prefixes):
            raise DatasetError(f"{path}: unexpected column {c!r}")
    data = []
    for lineno, r in enumerate(rows[1:], start=2):
        if len(r) != len(header):
            raise DatasetError(f"{path}:{lineno}: expected {len(header)} columns, got {len(r)}")
        try:
            data.append([float(c) for c in r])
        except ValueError as exc:
            raise DatasetError(f"{path}:{lineno}: {exc}") from None
    if not data:
        raise DatasetError(f"{path}: no data rows")
    return header, np.array(data)


def load_dataset(path, X: SemialgebraicSet, U: SemialgebraicSet, X_T: SemialgebraicSet | None = None,
                 tau: float = DEFAULT_TAU) -> TrajectoryDataset:
    """Read and validate a dataset; out-of-set rows are rejected, never projected."""
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"{path}: no such file")
    header, pts = _read_csv(path, ("x", "u"))
    dx = sum(1 for c in header if c.startswith("x"))
    du = len(header) - dx
    if dx != X.nvars or du != U.nvars:
        raise DatasetError(f"{path}: found {dx} state and {du} control columns, "
                           f"expected {X.nvars} and {U.nvars}")
    term_path, side_path = _companions(path)
    terminal = None
    if term_path.exists():
        th, terminal = _read_csv(term_path, ("xT",))
        if len(th) != dx:
            raise DatasetError(f"{term_path}: expected {dx} columns")
    side = json.loads(side_path.read_text()) if side_path.exists() else {}
    D = TrajectoryDataset(dx, du, pts, terminal, float(side.get("mass", 1.0)),
                          side.get("seed"), side.get("generator", ""))
    try:
        D.validate(X, U, X_T, tau)
    except DatasetError as exc:
        raise DatasetError(f"{path}: {exc}") from None
    return D


# -- generative process -------------------------------------------------------------

Law = Callable[[np.ndarray], np.ndarray]


def occupation_sample(law: Law, region: SemialgebraicSet, n: int, seed: int,
                      mode: str = "uniform_state", U: SemialgebraicSet | None = None,
                      exit_time: Callable[[np.ndarray], np.ndarray] | None = None,
                      trajectory: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None,
                      t_max: float | None = None, tau: float = DEFAULT_TAU,
                      generator: str = "") -> TrajectoryDataset:
    """Draw n state/control pairs.

    ``uniform_state`` samples x uniformly in `region` and sets u = law(x).
    ``time_process`` draws initial points z with density proportional to the
    exit time T_z (rejection against `t_max`), then t uniform on [0, T_z],
    and records ``x = trajectory(z, t)`` with ``u = law(x)``.  Terminal points
    ``trajectory(z, T_z)`` are recorded alongside.
    """
    if n < 1:
        raise DatasetError("n must be at least 1")
    rng = np.random.default_rng(seed)
    terminal = None
    if mode == "uniform_state":
        x = sample_uniform(region, n, rng)
    elif mode == "time_process":
        if exit_time is None or trajectory is None or t_max is None:
            raise DatasetError("time_process needs exit_time, trajectory and t_max")
        zs = []
        got = 0
        while got < n:
            z = sample_uniform(region, max(2 * (n - got), 64), rng)
            T = np.asarray(exit_time(z), dtype=float)
            if np.any(T > t_max * (1 + 1e-12)):
                raise DatasetError("exit time exceeds t_max")
            keep = rng.uniform(size=T.size) * t_max < T
            zs.append(z[keep])
            got += int(keep.sum())
        z = np.vstack(zs)[:n]
        T = np.asarray(exit_time(z), dtype=float)
        t = rng.uniform(size=n) * T
        x = np.asarray(trajectory(z, t), dtype=float).reshape(n, -1)
        terminal = np.asarray(trajectory(z, T), dtype=float).reshape(n, -1)
    else:
        raise DatasetError(f"unknown sampling mode {mode!r}")
    u = np.asarray(law(x), dtype=float).reshape(n, -1)
    if U is not None:
        bad = np.flatnonzero(~U.contains_many(u, tau))
        if bad.size:
            raise DatasetError(f"law output outside U at sample(s) {', '.join(map(str, bad[:10]))}")
    return TrajectoryDataset(x.shape[1], u.shape[1], np.hstack([x, u]), terminal, 1.0, seed,
                             generator or mode)
