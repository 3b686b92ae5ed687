import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from npergm.errors import IndefiniteHessianError, InfeasibleError, ValidationError
from npergm.qp import QpProblem, solve_qp
from oracles import brute_qp


def random_problem(rng, q, m):
    M = rng.normal(size=(q, q))
    D = M @ M.T + 0.1 * np.eye(q)
    d = rng.normal(size=q)
    A = rng.normal(size=(m, q))
    # keep the problem feasible: constraints hold at a random point
    x0 = rng.normal(size=q)
    b0 = A @ x0 - rng.random(m)
    return QpProblem(D, d, A, b0)


def test_hand_example():
    # min (b1 - 0)^2/2 + (b2 - 2)^2/2  s.t.  -b2 >= -1
    p = QpProblem(np.eye(2), [0.0, 2.0], [[0.0, -1.0]], [-1.0])
    s = solve_qp(p)
    assert np.allclose(s.b, [0, 1]) and np.allclose(s.multipliers, [1])
    assert list(s.active) == [0]


def test_unconstrained_is_linear_solve():
    rng = np.random.default_rng(0)
    p = random_problem(rng, 6, 0)
    assert np.allclose(solve_qp(p).b, np.linalg.solve(p.D, p.d))


@given(st.integers(0, 2**32 - 1), st.integers(1, 8), st.integers(0, 8))
def test_matches_brute_force_and_kkt(seed, q, m):
    p = random_problem(np.random.default_rng(seed), q, m)
    s = solve_qp(p)
    kkt = s.kkt_residuals(p)
    assert kkt["stationarity"] < 1e-8 and kkt["complementarity"] < 1e-8
    assert kkt["infeasibility"] < 1e-9 and kkt["dual_negativity"] == 0
    _, obj = brute_qp(p.D, p.d, p.A, p.b0)
    assert abs(s.objective - obj) < 1e-6 * (1 + abs(obj))


def test_matches_cvxopt_on_larger_problems():
    cvxopt = pytest.importorskip("cvxopt")
    cvxopt.solvers.options.update(show_progress=False, abstol=1e-12, reltol=1e-12, feastol=1e-12)
    rng = np.random.default_rng(1)
    for _ in range(10):
        p = random_problem(rng, 30, 50)
        s = solve_qp(p)
        m = cvxopt.matrix
        r = cvxopt.solvers.qp(m(p.D), m(-p.d), m(-p.A), m(-p.b0))
        assert abs(s.objective - r["primal objective"]) < 1e-6 * (1 + abs(s.objective))


def test_warm_start_and_row_order_do_not_change_solution():
    rng = np.random.default_rng(2)
    p = random_problem(rng, 15, 25)
    s = solve_qp(p)
    # any warm start, including a wrong one
    for w in (s.active, [0, 1, 2, 3], list(range(25))):
        assert np.allclose(solve_qp(p, active=w).b, s.b, atol=1e-9)
    perm = rng.permutation(25)
    s2 = solve_qp(QpProblem(p.D, p.d, p.A[perm], p.b0[perm]))
    assert np.allclose(s2.b, s.b, atol=1e-9)


def test_infeasible_raises():
    p = QpProblem(np.eye(1), [0.0], [[1.0], [-1.0]], [1.0, 0.0])  # b >= 1 and b <= 0
    with pytest.raises(InfeasibleError):
        solve_qp(p)


def test_indefinite_raises():
    with pytest.raises(IndefiniteHessianError), warnings.catch_warnings():
        warnings.simplefilter("ignore")
        solve_qp(QpProblem(np.diag([1.0, -1.0]), [0.0, 0.0]))


def test_problem_validation():
    with pytest.raises(ValidationError):
        QpProblem(np.array([[1.0, 2.0], [0.0, 1.0]]), [0, 0])
    with pytest.raises(ValidationError):
        QpProblem(np.eye(2), [0, 0, 0])
    with pytest.raises(ValidationError):
        QpProblem(np.eye(2), [0, 0], np.ones((2, 2)), [0.0])
