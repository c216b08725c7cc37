import numpy as np
import pytest

from occinv import conic
from occinv.conic import Tolerances
from occinv.polynomials import Polynomial
from occinv.semialgebraic import box
from occinv.soscomp import (
    AffinePolyExpr,
    ConicProgram,
    PolyVariable,
    extract_certificate,
    putinar_constrain,
    verify_certificate,
)


def test_scalar_lp():
    prog = ConicProgram()
    x = prog.add_variable("x")
    prog.add_inequality([x], [-1.0], -1.0)  # x >= 1
    prog.add_objective([x], [1.0])
    sol = conic.solve(prog)
    assert sol.status == "optimal"
    assert sol.x[x] == pytest.approx(1.0, abs=1e-7)


def test_trace_minimization():
    prog = ConicProgram()
    S = prog.add_psd_block(2)
    i, j = S.tril()
    pos = {(a, b): S.start + t for t, (a, b) in enumerate(zip(i, j))}
    prog.add_equality([pos[0, 0]], [1.0], 2.0)
    prog.add_objective([pos[0, 0], pos[1, 1]], [1.0, 1.0])
    sol = conic.solve(prog)
    assert sol.status == "optimal"
    assert sol.objective == pytest.approx(2.0, abs=1e-7)


def _q1_program():
    prog = ConicProgram()
    x = Polynomial.variable(1, 0)
    h = putinar_constrain(prog, AffinePolyExpr.constant(1 - x**2), box([-1.0], [1.0]), 1)
    return prog, h, 1 - x**2


def test_putinar_feasibility_on_interval():
    prog, h, target = _q1_program()
    sol = conic.solve(prog)
    assert sol.status == "optimal"
    rep = verify_certificate(extract_certificate(h, sol), target)
    assert rep.ok and rep.residual <= 1e-7 and rep.min_eig >= -1e-8
    res = conic.residuals(prog, sol)
    assert res.primal <= 1e-7


def test_residuals_of_hand_point_and_perturbation():
    prog = ConicProgram()
    x = prog.add_variables(2)
    prog.add_equality(x, [1.0, 1.0], 1.0)
    prog.add_inequality([x[0]], [1.0], 0.75)
    sol = conic.ConicSolution("optimal", np.array([0.5, 0.5]), np.zeros(1), np.zeros(1), [],
                              0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0)
    assert conic.residuals(prog, sol).primal == 0.0
    sol.x[1] += 1e-3
    assert conic.residuals(prog, sol).eq == pytest.approx(1e-3)


def test_infeasible_and_unbounded_statuses():
    prog = ConicProgram()
    x = prog.add_variable()
    prog.add_inequality([x], [1.0], -1.0)  # x <= -1
    prog.add_inequality([x], [-1.0], -1.0)  # x >= 1
    assert conic.solve(prog).status == "infeasible"

    prog = ConicProgram()
    x = prog.add_variable()
    prog.add_inequality([x], [1.0], 1.0)
    prog.add_objective([x], [1.0])  # min x with x <= 1
    assert conic.solve(prog).status == "unbounded"


def test_zero_row_with_rhs_is_infeasible():
    prog = ConicProgram()
    x = prog.add_variable()
    prog.add_equality([x], [0.0], 1.0)
    sol = conic.solve(prog)
    assert sol.status == "infeasible"


def test_solve_is_deterministic():
    prog = ConicProgram()
    v = PolyVariable.declare(prog, 1, 2, "p")
    h = putinar_constrain(prog, v.expr(), box([-1.0], [1.0]), 1)
    prog.add_equality(v.vars, [2.0, 0.0, 2 / 3], 1.0)
    prog.add_objective(v.vars, [0.0, 1.0, 0.0])
    a = conic.solve(prog, Tolerances())
    b = conic.solve(prog, Tolerances())
    np.testing.assert_array_equal(a.x, b.x)
    assert h.rows[1] == 3
