"""Benchmark problems with known optimal laws, the estimation metric and lambda sweeps."""

from __future__ import annotations

import csv
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .direct import DirectProblem, SolverFailure
from .iocp import IocpConfig, solve_iocp
from .occupation import TrajectoryDataset, load_dataset, occupation_sample
from .polynomials import Polynomial, sum_of_squares
from .semialgebraic import (
    SemialgebraicSet,
    annulus,
    ball,
    box,
    cylinder,
    difference,
    point,
    sphere,
)

PROBLEM_IDS = ("eik1d", "A", "Aprime", "B", "C")


class ExternalDataRequired(RuntimeError):
    """The problem has no built-in generator; a trajectory file must be supplied."""


@dataclass(frozen=True)
class BenchmarkProblem:
    id: str
    problem: DirectProblem
    l0: Polynomial
    law: Callable[[np.ndarray], np.ndarray] | None
    region: SemialgebraicSet
    v0: Callable[[np.ndarray], np.ndarray] | None = None
    grad_v0: Callable[[np.ndarray], np.ndarray] | None = None
    exit_time: Callable[[np.ndarray], np.ndarray] | None = None
    trajectory: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
    default_n: int = 20
    data_path: str | None = None

    def generate(self, n: int | None = None, seed: int = 0, mode: str = "uniform_state") -> TrajectoryDataset:
        """Sample a dataset from the optimal law (or load the external file)."""
        if self.law is None:
            if self.data_path is None:
                raise ExternalDataRequired(
                    f"problem {self.id}: external data required (no built-in optimal law)")
            D = load_dataset(self.data_path, self.problem.X, self.problem.U, self.problem.X_T)
            if n is not None and n < D.n:
                D = TrajectoryDataset(D.dx, D.du, D.points[:n], D.terminal, D.mass, D.seed, D.generator)
            return D
        n = self.default_n if n is None else n
        t_max = None
        if mode == "time_process":
            if self.exit_time is None:
                raise ValueError(f"problem {self.id} has no time-process description")
            t_max = self.problem.T_M
        return occupation_sample(self.law, self.region, n, seed, mode, U=self.problem.U,
                                 exit_time=self.exit_time, trajectory=self.trajectory,
                                 t_max=t_max, generator=f"{self.id}:{mode}")

    def hjb_residual(self, x: np.ndarray) -> np.ndarray:
        """``l0(x, law(x)) + grad v0(x) . f(x, law(x))`` at the given states."""
        if self.law is None or self.grad_v0 is None:
            raise ExternalDataRequired(f"problem {self.id}: no closed-form law or value")
        x = np.atleast_2d(np.asarray(x, dtype=float))
        u = np.atleast_2d(self.law(x)).reshape(x.shape[0], -1)
        z = np.hstack([x, u])
        fz = np.column_stack([fi.evaluate_many(z) for fi in self.problem.f])
        return self.l0.evaluate_many(z) + np.sum(self.grad_v0(x) * fz, axis=1)


def _unit_radial(x: np.ndarray) -> np.ndarray:
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def make_problem(pid: str, data_path: str | None = None) -> BenchmarkProblem:
    """Built-in benchmark definitions.

    ``eik1d``: X = U = [-1, 1], reach {-1, 1} in minimum time.
    ``A``/``Aprime``: minimum exit time from the unit disk, sampled on the disk
    or on the annulus 1/2 <= |x| <= 1.  ``B``: minimum exit norm with
    l0 = |x|^2 + |u|^2.  ``C``: Brockett integrator, data supplied externally.
    """
    if pid == "eik1d":
        X = box([-1.0], [1.0])
        x, u = Polynomial.variables(2)
        X_T = SemialgebraicSet(1, (), (1.0 - Polynomial.variable(1, 0) ** 2,), None, True, "boundary")
        prob = DirectProblem((u,), X, box([-1.0], [1.0]), X_T, T_M=2.0)
        return BenchmarkProblem(
            "eik1d", prob, Polynomial.constant(2, 1.0),
            law=lambda s: np.sign(s),
            region=X,
            v0=lambda s: 1.0 - np.abs(s[:, 0]),
            grad_v0=lambda s: -np.sign(s),
            exit_time=lambda s: 1.0 - np.abs(s[:, 0]),
            trajectory=lambda s, t: s + t[:, None] * np.sign(s),
            default_n=100,
        )
    if pid in ("A", "Aprime"):
        z = Polynomial.variables(4)
        prob = DirectProblem((z[2], z[3]), ball(2), ball(2), sphere(2), T_M=2.0)
        region = ball(2) if pid == "A" else annulus(2, 0.5, 1.0)
        return BenchmarkProblem(
            pid, prob, Polynomial.constant(4, 1.0),
            law=_unit_radial,
            region=region,
            v0=lambda s: 1.0 - np.linalg.norm(s, axis=1),
            grad_v0=lambda s: -_unit_radial(s),
            exit_time=lambda s: 1.0 - np.linalg.norm(s, axis=1),
            trajectory=lambda s, t: s + t[:, None] * _unit_radial(s),
        )
    if pid == "B":
        z = Polynomial.variables(4)
        # exit time -log|z| is unbounded near the origin, so T_M is a modelling choice
        prob = DirectProblem((z[2], z[3]), ball(2), ball(2), sphere(2), T_M=10.0)
        return BenchmarkProblem(
            "B", prob, sum_of_squares(4),
            law=lambda s: np.array(s, dtype=float, copy=True),
            region=ball(2),
            v0=lambda s: 1.0 - np.sum(s**2, axis=1),
            grad_v0=lambda s: -2.0 * s,
        )
    if pid == "C":
        z = Polynomial.variables(5)
        x1, x2, _, u1, u2 = z
        f = (u1, u2, u1 * x2 - u2 * x1)
        prob = DirectProblem(f, ball(3, 3.0), ball(2), point([0.0, 0.0, 0.0]), T_M=10.0)
        region = difference(ball(3), cylinder(3, [0, 1], 0.5))
        return BenchmarkProblem("C", prob, Polynomial.constant(5, 1.0), law=None, region=region,
                                default_n=50, data_path=data_path)
    raise KeyError(f"unknown problem id {pid!r}; expected one of {', '.join(PROBLEM_IDS)}")


def estimation_error(l0: Polynomial, l: Polynomial) -> float:
    """``sqrt(1 - <l0, l>^2 / (|l0|^2 |l|^2))`` over graded-lex coefficients."""
    if l.nvars != l0.nvars:
        raise ValueError("polynomials live in different variable spaces")
    n0, n1 = l0.norm2(), l.norm2()
    if n1 <= 1e-12 or n0 <= 1e-12:
        raise ValueError("estimation error is undefined for a zero polynomial")
    cos2 = (l0.inner(l) / (n0 * n1)) ** 2
    return math.sqrt(max(0.0, 1.0 - cos2))


# -- sweeps -------------------------------------------------------------------------

@dataclass
class SweepRow:
    lam: float
    epsilon: float
    est_error: float
    time_s: float
    status: str = "optimal"
    verified: bool = False
    l: Polynomial | None = None
    solver: dict = field(default_factory=dict)

    def csv_row(self) -> list[str]:
        return [repr(self.lam), repr(self.epsilon), repr(self.est_error), f"{self.time_s:.3f}"]


def _sweep_one(args) -> SweepRow:
    problem, D, cfg, l0, lam = args
    t0 = time.perf_counter()
    try:
        sol = solve_iocp(problem, D, replace(cfg, lam=float(lam)))
    except SolverFailure as exc:
        status = exc.solution.status if exc.solution is not None else "numerical_limit"
        return SweepRow(float(lam), float("nan"), float("nan"), time.perf_counter() - t0, status)
    try:
        err = estimation_error(l0, sol.l)
    except ValueError:
        err = float("nan")
    return SweepRow(float(lam), sol.epsilon, err, time.perf_counter() - t0, "optimal",
                    sol.verified, sol.l, sol.solver)


def sweep_workers() -> int:
    try:
        return max(1, int(os.environ.get("OCCINV_THREADS", "1")))
    except ValueError:
        return 1


def lambda_sweep(problem: DirectProblem, D: TrajectoryDataset, cfg: IocpConfig, grid: Sequence[float],
                 l0: Polynomial, workers: int | None = None) -> list[SweepRow]:
    """Solve once per lambda; failures are recorded in their row and the sweep goes on."""
    grid = [float(g) for g in grid]
    if not grid:
        raise ValueError("lambda grid is empty")
    if any(g < 0 for g in grid):
        raise ValueError("lambda values must be non-negative")
    workers = sweep_workers() if workers is None else workers
    jobs = [(problem, D, cfg, l0, lam) for lam in sorted(grid)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(_sweep_one, jobs))
    else:
        rows = [_sweep_one(j) for j in jobs]
    return rows


def write_sweep_csv(rows: Sequence[SweepRow], path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["lambda", "epsilon", "est_error", "time_s"])
        for r in rows:
            w.writerow(r.csv_row())
    return path
