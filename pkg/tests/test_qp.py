import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from awoisv.errors import DimensionMismatch
from awoisv.qp import DenseAdmmSolver, QpProblem, QpSettings, QpStatus, solve


def random_qp(rng, n=10, m=6, box=True):
    M = rng.standard_normal((n, n))
    H = M @ M.T + 0.5 * np.eye(n)
    g = rng.standard_normal(n) * 3
    G = rng.standard_normal((m, n))
    z_feas = rng.uniform(-0.5, 0.5, n)
    slack = rng.uniform(0.1, 1.0, m)
    lo, hi = G @ z_feas - slack, G @ z_feas + slack
    if box:
        return QpProblem(H, g, G, lo, hi, np.full(n, -1.0), np.full(n, 1.0))
    return QpProblem(H, g, G, lo, hi)


def projected_gradient(H, g, lb, ub, tol=1e-12, max_iter=1_000_000):
    step = 1.0 / np.linalg.eigvalsh(H)[-1]
    z = np.clip(np.zeros(len(g)), lb, ub)
    for _ in range(max_iter):
        z_new = np.clip(z - step * (H @ z + g), lb, ub)
        if np.max(np.abs(z_new - z)) < tol:
            return z_new
        z = z_new
    return z


def kkt_residuals(p, sol):
    A, lo, hi = p.stacked()
    z, y = sol.z, sol.y
    stat = np.max(np.abs(p.H @ z + p.g + A.T @ y))
    Az = A @ z
    feas = np.max(np.maximum(lo - Az, 0) + np.maximum(Az - hi, 0))
    comp = np.max(np.abs(np.minimum(y, 0) * (Az - lo)) + np.abs(np.maximum(y, 0) * (hi - Az)))
    return stat, feas, comp


def test_clipped_scalar():
    sol = solve(QpProblem([[2.0]], [-2.0], z_ub=[0.5]))
    assert sol.ok and sol.z[0] == pytest.approx(0.5, abs=1e-8)


def test_unconstrained_origin():
    sol = solve(QpProblem(np.eye(2), np.zeros(2), z_lb=[-1, -1], z_ub=[1, 1]))
    assert sol.ok and np.max(np.abs(sol.z)) < 1e-8


def test_box_qps_match_projected_gradient():
    rng = np.random.default_rng(3)
    for _ in range(20):
        n = 10
        M = rng.standard_normal((n, n))
        H = M @ M.T + np.eye(n)
        g = 4 * rng.standard_normal(n)
        lb, ub = -rng.uniform(0.1, 1, n), rng.uniform(0.1, 1, n)
        sol = solve(QpProblem(H, g, z_lb=lb, z_ub=ub))
        assert sol.ok
        np.testing.assert_allclose(sol.z, projected_gradient(H, g, lb, ub), atol=1e-5)


@settings(max_examples=60)
@given(st.integers(0, 2**32 - 1), st.integers(2, 30), st.integers(0, 20))
def test_kkt_conditions(seed, n, m):
    p = random_qp(np.random.default_rng(seed), n, m)
    sol = solve(p)
    assert sol.status is QpStatus.OPTIMAL
    stat, feas, comp = kkt_residuals(p, sol)
    assert stat <= 1e-5 and feas <= 1e-5 and comp <= 1e-5


def test_equality_rows():
    p = QpProblem(np.eye(2), [0.0, 0.0], [[1.0, 1.0]], [1.0], [1.0])
    sol = solve(p)
    np.testing.assert_allclose(sol.z, [0.5, 0.5], atol=1e-8)


def test_infeasible_detected():
    p = QpProblem(np.eye(2), [0.0, 0.0], [[1.0, 1.0], [1.0, 1.0]], [2.0, -np.inf], [np.inf, 1.0])
    sol = solve(p)
    assert sol.status is QpStatus.INFEASIBLE


def test_max_iter_flagged():
    rng = np.random.default_rng(5)
    p = random_qp(rng, 30, 20)
    sol = solve(p, settings=QpSettings(max_iter=5, polish=False, check_interval=1))
    assert sol.status is QpStatus.MAX_ITER
    assert sol.iterations == 5 and sol.z.shape == (30,)


def test_semidefinite_hessian_regularized():
    H = np.diag([1.0, 0.0])
    sol = solve(QpProblem(H, [-1.0, 1.0], z_lb=[-2, -2], z_ub=[2, 2]))
    assert sol.ok
    np.testing.assert_allclose(sol.z, [1.0, -2.0], atol=1e-5)


def test_warm_start_helps_on_perturbed_problems():
    rng = np.random.default_rng(9)
    fewer = 0
    trials = 50
    solver = DenseAdmmSolver(QpSettings(polish=False))
    for _ in range(trials):
        p = random_qp(rng, 40, 30)
        first = solver.solve(p)
        q = QpProblem(p.H, p.g * (1 + 0.05 * rng.standard_normal(p.n)), p.G, p.l, p.u, p.z_lb, p.z_ub)
        cold = solver.solve(q)
        warm = solver.solve(q, first.z, first.y)
        fewer += warm.iterations <= cold.iterations
    assert fewer >= 0.9 * trials


def test_dimension_checks():
    with pytest.raises(DimensionMismatch):
        QpProblem(np.eye(2), np.zeros(3))
    with pytest.raises(ValueError):
        QpProblem([[1.0, 2.0], [0.0, 1.0]], np.zeros(2))
    with pytest.raises(ValueError):
        QpProblem(np.eye(1), [0.0], z_lb=[1.0], z_ub=[0.0])


def test_dump_round_trip(tmp_path):
    p = random_qp(np.random.default_rng(1), 4, 3)
    p.dump(tmp_path / "qp.txt")
    q = QpProblem.load(tmp_path / "qp.txt")
    for name in ("H", "g", "G", "l", "u", "z_lb", "z_ub"):
        np.testing.assert_array_equal(getattr(p, name), getattr(q, name))
