import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from occinv.polynomials import (
    MonomialIndex,
    Polynomial,
    basis_eval,
    basis_eval_many,
    basis_size,
    default_names,
    dot_dynamics,
    monomial_basis,
    sum_of_squares,
)


def polys(nvars=2, max_deg=3):
    exps = st.tuples(*[st.integers(0, max_deg)] * nvars).filter(lambda e: sum(e) <= max_deg)
    coefs = st.floats(-5, 5, allow_nan=False).map(lambda c: round(c, 3))
    return st.dictionaries(exps, coefs, max_size=6).map(lambda t: Polynomial(nvars, t))


points = st.lists(st.floats(-2, 2, allow_nan=False), min_size=2, max_size=2)


def test_basis_is_graded_lex_and_sized():
    b = monomial_basis(2, 2)
    assert b[0] == (0, 0)
    assert [sum(e) for e in b] == sorted(sum(e) for e in b)
    assert len(b) == basis_size(2, 2) == 6
    assert basis_size(4, 4) == math.comb(8, 4) == 70


def test_basis_eval_monomial_ladder():
    np.testing.assert_array_equal(basis_eval(1, 2, [3.0]), [1.0, 3.0, 9.0])


def test_difference_of_squares():
    x = Polynomial.variable(1, 0)
    assert ((x + 1) * (x - 1)).allclose(x**2 - 1)


@given(polys())
def test_additive_identity(p):
    assert (p + Polynomial.zero(2)).allclose(p)
    assert (p + 0).allclose(p)


def test_scale():
    x1, u1 = Polynomial.variables(2)
    assert (x1 * u1).scale(2.0).allclose(Polynomial.monomial((1, 1), 2.0))


@settings(max_examples=50)
@given(polys(), polys(), polys())
def test_ring_laws(p, q, r):
    assert (p * (q + r)).allclose(p * q + p * r, atol=1e-9)
    assert ((p * q) * r).allclose(p * (q * r), atol=1e-8)
    assert (p * q).allclose(q * p, atol=1e-9)
    assert (p - p).is_zero()


@settings(max_examples=50)
@given(polys(), polys(), points)
def test_evaluation_is_a_ring_map(p, q, z):
    assert math.isclose((p * q).evaluate(z), p.evaluate(z) * q.evaluate(z), rel_tol=1e-9, abs_tol=1e-9)
    assert math.isclose((p + q).evaluate(z), p.evaluate(z) + q.evaluate(z), rel_tol=1e-9, abs_tol=1e-9)


def test_gradient_examples():
    x1, x2 = Polynomial.variables(2)
    g = (x1**2 + x2**2).gradient()
    assert g[0].allclose(2 * x1) and g[1].allclose(2 * x2)
    assert all(gi.is_zero() for gi in Polynomial.constant(2, 3.0).gradient())
    g = (x1 * x2).gradient()
    assert g[0].allclose(x2) and g[1].allclose(x1)


def test_dot_dynamics_examples():
    x, u = Polynomial.variables(2)
    assert dot_dynamics(x.restrict([0]) ** 2, [u]).allclose(2 * x * u)
    z = Polynomial.variables(4)
    v = 1 - Polynomial.variable(2, 0) ** 2 - Polynomial.variable(2, 1) ** 2
    assert dot_dynamics(v, [z[2], z[3]]).allclose(-2 * z[0] * z[2] - 2 * z[1] * z[3])
    assert dot_dynamics(Polynomial.constant(2, 4.0), [z[2], z[3]]).is_zero()


def test_evaluate_example():
    x = Polynomial.variable(1, 0)
    assert (x**2 + 1).evaluate([2.0]) == 5.0


@settings(max_examples=40)
@given(polys(3, 4), st.lists(st.floats(-1.5, 1.5, allow_nan=False), min_size=3, max_size=3))
def test_coefficient_vector_dot_basis_equals_evaluate(p, z):
    d = max(p.degree, 0)
    lhs = p.coeff_vector(d) @ basis_eval(3, d, z)
    assert math.isclose(lhs, p.evaluate(z), rel_tol=1e-10, abs_tol=1e-10)


def test_evaluate_many_matches_pointwise():
    rng = np.random.default_rng(1)
    p = Polynomial.from_coeffs(3, 3, rng.standard_normal(basis_size(3, 3)))
    pts = rng.uniform(-1, 1, (25, 3))
    np.testing.assert_allclose(p.evaluate_many(pts), [p.evaluate(z) for z in pts], atol=1e-12)
    np.testing.assert_allclose(basis_eval_many(3, 3, pts)[4], basis_eval(3, 3, pts[4]))


def test_norms_and_inner():
    x, u = Polynomial.variables(2)
    assert (2 * x - 3).norm1() == 5.0
    assert (3 * x + 4 * u).norm2() == 5.0
    assert x.inner(u) == 0.0


def test_text_round_trip():
    names = default_names(4, 2)
    p = sum_of_squares(4) + Polynomial.monomial((1, 0, 2, 0), -0.5) + 3.0
    q = Polynomial.from_text(p.to_text(names), names)
    assert q.allclose(p)


def test_text_rejects_unknown_names():
    with pytest.raises(ValueError):
        Polynomial.from_text("1.0 * w^2", ["x1", "u1"])


def test_json_round_trip():
    p = Polynomial.monomial((2, 1), 1.25) - Polynomial.constant(2, 0.5)
    assert Polynomial.from_json(p.to_json()).allclose(p, atol=0)


def test_monomial_index_lookup():
    idx = MonomialIndex(2, 3)
    exps = np.array(monomial_basis(2, 3))
    np.testing.assert_array_equal(idx.lookup(exps), np.arange(len(exps)))


def test_embed_restrict_inverse():
    x = Polynomial.variable(2, 0) ** 2 + Polynomial.variable(2, 1)
    e = x.embed(4)
    assert e.nvars == 4 and e.restrict([0, 1]).allclose(x)


def test_pickle_round_trip():
    import pickle
    p = sum_of_squares(3) - 2.5
    assert pickle.loads(pickle.dumps(p)).allclose(p, atol=0)


def int_polys(nvars=2, max_deg=3):
    exps = st.tuples(*[st.integers(0, max_deg)] * nvars).filter(lambda e: sum(e) <= max_deg)
    return st.dictionaries(exps, st.integers(-9, 9), max_size=6).map(lambda t: Polynomial(nvars, t))


@given(int_polys(), int_polys())
def test_product_rule_is_exact(p, q):
    lhs = (p * q).gradient()
    rhs = [p * dq + q * dp for dp, dq in zip(p.gradient(), q.gradient())]
    assert lhs == rhs
