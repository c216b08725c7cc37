import math

import numpy as np
import pytest

from occinv import conic
from occinv.polynomials import Polynomial, basis_size
from occinv.semialgebraic import ball, box
from occinv.soscomp import (
    AffinePolyExpr,
    ConicProgram,
    GramCertificate,
    PolyVariable,
    ProgramError,
    extract_certificate,
    gram_polynomial,
    l1_lift,
    putinar_constrain,
    verify_certificate,
)


def _feasible(expr_poly, G, k):
    prog = ConicProgram()
    h = putinar_constrain(prog, AffinePolyExpr.constant(expr_poly), G, k)
    sol = conic.solve(prog)
    return prog, h, sol


def test_boundary_polynomial_in_quadratic_module():
    x = Polynomial.variable(1, 0)
    _, h, sol = _feasible(1 - x**2, box([-1.0], [1.0]), 1)
    assert sol.status == "optimal"
    assert verify_certificate(extract_certificate(h, sol)).ok


def test_square_is_certified_on_any_set():
    x, u = Polynomial.variables(2)
    for G in (ball(2), box([-1.0, -1.0], [1.0, 1.0])):
        _, h, sol = _feasible((x - u) ** 2, G, 1)
        assert sol.status == "optimal"
        assert verify_certificate(extract_certificate(h, sol)).ok


def test_negative_constant_is_never_certified():
    for k in (1, 2):
        _, _, sol = _feasible(Polynomial.constant(2, -1.0), ball(2), k)
        assert sol.status == "infeasible"


def test_degree_and_archimedean_checks():
    x = Polynomial.variable(1, 0)
    prog = ConicProgram()
    with pytest.raises(ProgramError):
        putinar_constrain(prog, AffinePolyExpr.constant(x**4), box([-1.0], [1.0]), 1)
    from occinv.semialgebraic import SemialgebraicSet
    open_set = SemialgebraicSet(1, (x,), (), None, False)
    with pytest.raises(ProgramError):
        putinar_constrain(prog, AffinePolyExpr.constant(x), open_set, 1)


def test_gram_polynomial_of_x_squared():
    S = np.array([[0.0, 0.0], [0.0, 1.0]])
    x = Polynomial.variable(1, 0)
    assert gram_polynomial(S, 1, 1).allclose(x**2)
    cert = GramCertificate(1, 1, [S], [Polynomial.constant(1, 1.0)], [1])
    rep = verify_certificate(cert, x**2)
    assert rep.residual == 0.0 and rep.min_eig == 0.0


def test_random_sos_polynomial_verifies():
    rng = np.random.default_rng(4)
    n, d = 2, 2
    m = basis_size(n, d)
    V = rng.standard_normal((3, m))
    target = gram_polynomial(V.T @ V, n, d)  # sum of three random squares
    _, h, sol = _feasible(target, ball(2), 2)
    assert sol.status == "optimal"
    rep = verify_certificate(extract_certificate(h, sol), target)
    assert rep.ok, rep


def test_l1_lift_fixed_value():
    prog = ConicProgram()
    c = prog.add_variables(2)
    prog.add_equality([c[0]], [1.0], 2.0)
    prog.add_equality([c[1]], [1.0], -3.0)
    l1_lift(prog, c, 0.5)
    sol = conic.solve(prog)
    assert sol.status == "optimal"
    assert sol.objective == pytest.approx(2.5, abs=1e-7)


def test_l1_lift_zero_weight_adds_nothing():
    prog = ConicProgram()
    c = prog.add_variables(3)
    assert l1_lift(prog, c, 0.0).size == 0
    assert prog.n_ineq == 0


def test_l1_tiny_lp():
    prog = ConicProgram()
    c = prog.add_variables(2)
    prog.add_equality(c, [1.0, 1.0], 1.0)
    l1_lift(prog, c, 1.0)
    sol = conic.solve(prog)
    assert sol.status == "optimal"
    assert sol.objective == pytest.approx(1.0, abs=1e-7)


def test_l1_requires_min_sense_and_nonnegative_weight():
    prog = ConicProgram()
    c = prog.add_variables(1)
    with pytest.raises(ProgramError):
        l1_lift(prog, c, -1.0)
    prog.set_sense("max")
    with pytest.raises(ProgramError):
        l1_lift(prog, c, 1.0)


def test_poly_variable_dot_dynamics_matches_polynomial():
    prog = ConicProgram()
    v = PolyVariable.declare(prog, 2, 3, "v")
    x = np.random.default_rng(0).standard_normal(prog.nvars)
    z = Polynomial.variables(4)
    f = [z[2], z[3] * z[0]]
    from occinv.polynomials import dot_dynamics
    assert v.dot_dynamics(f).value(x).allclose(dot_dynamics(v.value(x), f), atol=1e-12)


def test_linear_form_matches_evaluation():
    prog = ConicProgram()
    v = PolyVariable.declare(prog, 2, 2, "v")
    x = np.random.default_rng(1).standard_normal(prog.nvars)
    e = v.expr() + Polynomial.constant(2, 1.5)
    from occinv.polynomials import basis_eval
    w = basis_eval(2, 2, [0.3, -0.7])
    const, lin = e.linear_form(w, 2)
    val = const + sum(c * x[j] for j, c in lin.items())
    assert val == pytest.approx(e.value(x).evaluate([0.3, -0.7]))


def _random_sos(rng, n, d, terms=2):
    V = rng.standard_normal((terms, basis_size(n, d)))
    return gram_polynomial(V.T @ V, n, d)


def test_known_multipliers_round_trip():
    rng = np.random.default_rng(7)
    G = ball(2)
    g = G.ineqs[0]
    target = _random_sos(rng, 2, 2) + _random_sos(rng, 2, 1) * g
    _, h, sol = _feasible(target, G, 2)
    assert sol.status == "optimal"
    rep = verify_certificate(extract_certificate(h, sol), target)
    assert rep.ok and rep.residual <= 1e-7


def test_feasibility_is_monotone_in_k():
    rng = np.random.default_rng(8)
    G = box([-1.0, -1.0], [1.0, 1.0])
    for _ in range(10):
        target = _random_sos(rng, 2, 1) + _random_sos(rng, 2, 1) * G.ineqs[0]
        for k in (2, 3):
            _, h, sol = _feasible(target, G, k)
            assert sol.status == "optimal"
            assert verify_certificate(extract_certificate(h, sol), target).ok


@pytest.mark.parametrize("n,k", [(1, 1), (2, 2), (3, 2)])
def test_matching_equality_count(n, k):
    prog = ConicProgram()
    h = putinar_constrain(prog, AffinePolyExpr.constant(Polynomial.constant(n, 1.0)), ball(n), k)
    assert h.rows[1] - h.rows[0] == math.comb(n + 2 * k, 2 * k)
