import math
from dataclasses import replace

import numpy as np
import pytest

from occinv.bench import make_problem
from occinv.direct import DirectProblem
from occinv.iocp import (
    IocpConfig,
    IocpError,
    build_sampled_iocp,
    check_membership,
    default_lambda_grid,
    resolve_terminal,
    solve_iocp,
    verify_solution,
)
from occinv.occupation import TrajectoryDataset
from occinv.polynomials import Polynomial, basis_eval_many, basis_size, dot_dynamics
from occinv.semialgebraic import MomentVector, ball, lebesgue_moments, point, product, sphere

SMALL = IocpConfig(deg_l=2, deg_v=2)


@pytest.fixture(scope="module")
def prob_b():
    return make_problem("B")


@pytest.fixture(scope="module")
def data_b(prob_b):
    return prob_b.generate(20, seed=0)


def v0_b():
    x1, x2 = Polynomial.variables(2)
    return 1 - x1**2 - x2**2


def test_default_grid():
    g = default_lambda_grid()
    assert g[0] == 0.0 and len(g) == 12
    assert g[1] == pytest.approx(1e-4) and g[-1] == pytest.approx(10.0)


def test_terminal_resolution():
    assert resolve_terminal(point([0.0, 0.0])) == "value_zero_point"
    assert resolve_terminal(sphere(2)) == "variety_ideal"
    assert resolve_terminal(ball(2)) == "putinar_pair"
    with pytest.raises(IocpError):
        resolve_terminal(ball(2), "value_zero_point")
    with pytest.raises(IocpError):
        resolve_terminal(ball(2), "nonsense")


def test_cone_degree_rule(prob_b):
    assert IocpConfig(deg_l=4, deg_v=10).cone_degree(prob_b.problem) == 5
    with pytest.raises(IocpError):
        IocpConfig(deg_l=4, deg_v=10, k=4).cone_degree(prob_b.problem)


def test_eikonal_program_structure():
    bp = make_problem("eik1d")
    D = bp.generate(100, seed=0)
    built = build_sampled_iocp(bp.problem, D, IocpConfig(deg_l=16, deg_v=16, lam=1.0))
    cone = [b for b in built.prog.blocks if b.tag.startswith("cone")]
    # SOS part plus one multiplier block per interval constraint of X x U
    assert len(cone) == 1 + len(bp.problem.XU.ineqs) == 3
    assert built.prog.n_ineq > 0
    assert len(built.l.vars) == basis_size(2, 16)


def test_problem_b_lagrangian_space(prob_b, data_b):
    built = build_sampled_iocp(prob_b.problem, data_b, IocpConfig(deg_l=4, deg_v=10))
    assert len(built.l.vars) == 70


def test_single_point_dataset_is_well_formed(prob_b):
    D = TrajectoryDataset(2, 2, np.array([[0.3, 0.4, 0.3, 0.4]]))
    sol = solve_iocp(prob_b.problem, D, SMALL)
    assert sol.verified


def test_exact_pair_is_feasible(prob_b):
    D = prob_b.generate(50, seed=1)
    res = check_membership(prob_b.l0, D, 1e-6, 2, prob_b.problem, normalize=False, v=v0_b())
    assert res.feasible and res.eps_min <= 1e-6
    assert all(r.ok for r in res.reports.values())


def test_identity_oracle():
    z = Polynomial.variables(4)
    x1, x2, u1, u2 = z
    l0 = x1**2 + x2**2 + u1**2 + u2**2
    E = l0 + dot_dynamics(v0_b(), [u1, u2])
    assert E.allclose((x1 - u1) ** 2 + (x2 - u2) ** 2)


def test_negative_lagrangian_infeasible(prob_b, data_b):
    for eps in (0.0, 0.5, 0.99):
        res = check_membership(Polynomial.constant(4, -1.0), data_b, eps, 2, prob_b.problem,
                               normalize=False)
        assert not res.feasible


def test_regularization_tradeoff(prob_b, data_b):
    lo = solve_iocp(prob_b.problem, data_b, IocpConfig(deg_l=2, deg_v=2, lam=1e-3))
    hi = solve_iocp(prob_b.problem, data_b, IocpConfig(deg_l=2, deg_v=2, lam=1e6))
    assert hi.verified and lo.verified
    assert hi.epsilon >= lo.epsilon - 1e-7
    assert hi.l.norm1() <= lo.l.norm1() + 1e-7


def test_solution_residuals_small(prob_b, data_b):
    sol = solve_iocp(prob_b.problem, data_b, IocpConfig(deg_l=2, deg_v=4, lam=0.1))
    r = sol.residuals
    assert r["ok"]
    assert r["empirical_excess"] <= 1e-6 and r["terminal"] <= 1e-6 and r["normalization"] <= 1e-6
    assert all(c["ok"] for c in r["certificates"].values())


def test_perturbation_shows_in_normalization(prob_b, data_b):
    sol = solve_iocp(prob_b.problem, data_b, IocpConfig(deg_l=2, deg_v=2, lam=0.1))
    sol.l = sol.l + Polynomial.monomial((0, 0, 0, 0), 0.1)
    r = verify_solution(sol, prob_b.problem, data_b)
    weight = lebesgue_moments(product(ball(2), ball(2)), 0).mass  # pi^2
    assert r["normalization"] == pytest.approx(0.1 * weight, rel=1e-6)
    assert not r["ok"]


def test_terminal_violation_flagged(prob_b, data_b):
    sol = solve_iocp(prob_b.problem, data_b, IocpConfig(deg_l=2, deg_v=2, lam=0.1))
    sol.v = sol.v + 0.5
    r = verify_solution(sol, prob_b.problem, data_b)
    assert r["terminal"] >= 0.5 - 1e-9
    assert not r["ok"]


def test_point_target_encoding():
    z = Polynomial.variables(4)
    prob = DirectProblem((z[2], z[3]), ball(2), ball(2), point([0.0, 0.0]), T_M=2.0)
    D = make_problem("B").generate(15, seed=2)
    sol = solve_iocp(prob, D, IocpConfig(deg_l=2, deg_v=2, lam=0.1))
    assert sol.terminal == "value_zero_point"
    assert abs(sol.v.evaluate([0.0, 0.0])) <= 1e-7
    assert sol.verified


def test_polyiocp_variant_from_moments(prob_b, data_b):
    mu = MomentVector(4, 4, data_b.moments(4).joint)
    # radial trajectories of the exact law end at x / |x|
    ends = data_b.states / np.linalg.norm(data_b.states, axis=1, keepdims=True)
    mu_T = MomentVector(2, 4, basis_eval_many(2, 4, ends).mean(axis=0))
    with pytest.raises(IocpError):
        check_membership(prob_b.l0, (mu, None), 1e-6, 2, prob_b.problem, variant="polyIOCP")
    res = check_membership(prob_b.l0, (mu, mu_T), 1e-6, 2, prob_b.problem, variant="polyIOCP",
                           normalize=False)
    assert res.status == "optimal" and res.feasible


def test_dimension_mismatch(prob_b):
    D = TrajectoryDataset(1, 1, np.zeros((3, 2)))
    with pytest.raises(IocpError):
        build_sampled_iocp(prob_b.problem, D, SMALL)


def test_config_json():
    cfg = IocpConfig(lam=0.5).to_json()
    assert cfg["lambda"] == 0.5 and math.isclose(cfg["tolerances"]["gap"], 1e-7)


@pytest.mark.parametrize("pid", ["eik1d", "A", "Aprime", "B"])
def test_program_is_always_feasible(pid):
    bp = make_problem(pid)
    prob = bp.problem
    D = bp.generate(20, seed=6)
    # the constant pair with v = 0 meets every constraint with eps = 1 / vol
    vol = lebesgue_moments(prob.XU, 0).mass
    const = Polynomial.constant(prob.nvars, 1.0 / vol)
    res = check_membership(const, D, 1.0 / vol, 1, prob, v=Polynomial.zero(prob.dx), deg_v=2)
    assert res.feasible
    assert solve_iocp(prob, D, SMALL).verified


def test_cone_combination(prob_b, data_b):
    x1, x2, u1, u2 = Polynomial.variables(4)
    la, va = prob_b.l0, v0_b()
    lb, vb = (u1 - x1) ** 2 + (u2 - x2) ** 2 + 0.5 * u1**2, Polynomial.zero(2)
    eps = 1e-6
    kw = dict(normalize=False)
    ea = check_membership(la, data_b, eps, 2, prob_b.problem, v=va, **kw)
    # lb is positive on the data, so it needs the data mean as its tolerance
    eps_b = float(np.mean(0.5 * data_b.controls[:, 0] ** 2)) + eps
    eb = check_membership(lb, data_b, eps_b, 2, prob_b.problem, v=vb, **kw)
    assert ea.feasible and eb.feasible
    both = check_membership(la + lb, data_b, eps + eps_b, 2, prob_b.problem, v=va + vb, **kw)
    assert both.feasible


def test_membership_is_monotone_in_eps_and_k(prob_b):
    D = prob_b.generate(30, seed=2)
    for eps, k in ((1e-6, 2), (1e-4, 2), (1e-6, 3), (1e-3, 3)):
        res = check_membership(prob_b.l0, D, eps, k, prob_b.problem, normalize=False)
        assert res.feasible, (eps, k)


def test_optimal_epsilon_nondecreasing_in_lambda(prob_b, data_b):
    cfg = IocpConfig(deg_l=2, deg_v=4)
    eps = [solve_iocp(prob_b.problem, data_b, replace(cfg, lam=lam)).epsilon
           for lam in (0.0, 1e-3, 1e-2, 1e-1, 1.0)]
    assert all(b >= a - 1e-6 for a, b in zip(eps, eps[1:])), eps


def test_duplicated_data_gives_same_solution(prob_b, data_b):
    twice = TrajectoryDataset(2, 2, np.vstack([data_b.points, data_b.points]))
    cfg = IocpConfig(deg_l=2, deg_v=4, lam=0.1)
    a = build_sampled_iocp(prob_b.problem, data_b, cfg)
    b = build_sampled_iocp(prob_b.problem, twice, cfg)
    A1, b1 = a.prog.equalities()
    A2, b2 = b.prog.equalities()
    G1, h1 = a.prog.inequalities()
    G2, h2 = b.prog.inequalities()
    assert abs(A1 - A2).max() <= 1e-14 and abs(G1 - G2).max() <= 1e-14
    np.testing.assert_array_equal(b1, b2)
    np.testing.assert_array_equal(h1, h2)
    sa = solve_iocp(prob_b.problem, data_b, cfg)
    sb = solve_iocp(prob_b.problem, twice, cfg)
    assert abs(sa.epsilon - sb.epsilon) <= 1e-7
    assert (sa.l - sb.l).norm1() <= 1e-5
