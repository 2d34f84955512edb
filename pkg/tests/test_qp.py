import numpy as np
import pytest

from lrmm.qp import kkt_residual, solve_qp

from qp_oracle import batched_dual_projected_gradient, dual_projected_gradient, random_feasible_qps


def test_unconstrained_minimiser():
    # cost z'z - 2(z1 + z2), i.e. H = 2I in the 0.5 z'Hz convention
    res = solve_qp(2 * np.eye(2), [-2.0, -2.0])
    assert res.feasible
    assert np.allclose(res.x, [1, 1])
    assert np.allclose(solve_qp(np.eye(2), [-2.0, -2.0]).x, [2, 2])
    assert res.active == ()


def test_halfspace_projection():
    res = solve_qp(np.eye(2), [-2.0, 0.0], [[1.0, 0.0]], [0.5])
    assert np.allclose(res.x, [0.5, 0.0])
    assert res.active == (0,)
    assert res.multipliers[0] == pytest.approx(1.5)


def test_infeasible_reported():
    A = [[1.0, 0.0], [-1.0, 0.0]]
    res = solve_qp(np.eye(2), [0.0, 0.0], A, [-1.0, -1.0])
    assert res.status == "infeasible"


def test_redundant_constraints():
    A = [[1.0, 0.0], [1.0, 0.0], [2.0, 0.0]]
    res = solve_qp(np.eye(2), [-2.0, 0.0], A, [0.5, 0.5, 1.0])
    assert np.allclose(res.x, [0.5, 0.0])
    assert kkt_residual(np.eye(2), np.array([-2.0, 0.0]), np.array(A), np.array([0.5, 0.5, 1.0]), res) < 1e-10


def test_oracle_self_check():
    H, f, A, b = random_feasible_qps(np.random.default_rng(5), 1)[0]
    z, lam = dual_projected_gradient(H, f, A, b)
    assert np.all(lam >= 0)
    assert np.all(A @ z <= b + 1e-6)


def test_random_qps_match_oracle():
    problems = random_feasible_qps(np.random.default_rng(0), 200)
    oracle = batched_dual_projected_gradient(problems)
    for (H, f, A, b), z in zip(problems, oracle):
        res = solve_qp(H, f, A, b)
        assert res.feasible
        assert kkt_residual(H, f, A, b, res) < 1e-8
        ref = 0.5 * z @ H @ z + f @ z
        assert abs(res.objective(H, f) - ref) < 1e-6
