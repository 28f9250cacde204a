"""Randomized invariant suites run by ``python -m awoisv validate``.

Each suite draws its cases from a seeded generator and reports the number of
failing cases and the worst residual seen.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .dynamics import Plant, PlantState, derivative_vbr, simulate_body
from .errors import ExcludedIcr
from .kinematics import (HALF_PI, SteerPose, classify_icr, classify_mode, icr_from_steer_pose,
                         steer_pose_from_icr, wheel_angles, wheel_angles_from_pose)
from .params import VehicleParams
from .predict import N_U, N_X, PredictModel
from .qp import DenseAdmmSolver, QpProblem, QpSettings, QpStatus
from .tire import fiala_force, slip_from_velocities, tire_frame_velocities
from .tube import ErrorFilterState, kalman_hysteresis_update


@dataclass
class SuiteResult:
    name: str
    cases: int
    failures: int
    worst: float
    seconds: float
    note: str = ""

    @property
    def passed(self) -> bool:
        return self.failures == 0 and self.cases > 0

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return (f"{flag} {self.name}: {self.cases} cases, {self.failures} failures, "
                f"worst {self.worst:.3e}, {self.seconds:.2f} s{' - ' + self.note if self.note else ''}")


def _random_pose(rng, params: VehicleParams) -> SteerPose:
    while True:
        theta = rng.uniform(-1.5, 1.5)
        beta = rng.uniform(-HALF_PI, HALF_PI)
        pose = SteerPose(theta, beta)
        try:
            classify_mode(pose, params)
        except ExcludedIcr:
            continue
        if abs(abs(pose.lateral_icr()) - 0.5 * params.track) > 1e-6:
            return pose


def icr_perpendicularity(rng, cases: int, params: VehicleParams, tol: float = 1e-10):
    """Every wheel heading is perpendicular to the ray from the ICR to the wheel."""
    worst, failures = 0.0, 0
    for _ in range(cases):
        pose = _random_pose(rng, params)
        icr = icr_from_steer_pose(pose)
        delta = wheel_angles(icr, params).delta
        rx, ry = params.wheel_x - icr.b0, params.wheel_y - icr.c0
        dot = np.abs(np.cos(delta) * rx + np.sin(delta) * ry) / np.hypot(rx, ry)
        worst = max(worst, float(dot.max()))
        failures += bool(dot.max() > tol)
    return failures, worst


def pose_round_trip(rng, cases: int, params: VehicleParams, tol: float = 1e-12):
    worst, failures = 0.0, 0
    for i in range(cases):
        if i % 10 == 0:
            beta = rng.uniform(-HALF_PI, HALF_PI)
            back = steer_pose_from_icr(icr_from_steer_pose(SteerPose(0.0, beta)))
            err = abs(back.theta) + abs(back.beta - beta)
        else:
            pose = _random_pose(rng, params)
            back = steer_pose_from_icr(icr_from_steer_pose(pose))
            err = abs(back.theta - pose.theta) + abs(back.beta - pose.beta)
        worst = max(worst, err)
        failures += bool(err > tol)
    return failures, worst


def mode_consistency(rng, cases: int, params: VehicleParams):
    """The pose-based and ICR-based mode classifications agree."""
    failures = 0
    for i in range(cases):
        pose = SteerPose(0.0, rng.choice([0.0, HALF_PI, rng.uniform(-1.5, 1.5)])) if i % 5 == 0 \
            else _random_pose(rng, params)
        failures += classify_mode(pose, params) is not classify_icr(icr_from_steer_pose(pose), params)
    return failures, float(failures)


def fiala_properties(rng, cases: int, params: VehicleParams):
    """Odd symmetry, saturation bound, monotone decrease and continuity at the sliding angle."""
    c = params.cornering_stiffness
    worst, failures = 0.0, 0
    for _ in range(cases):
        fy_max = rng.uniform(100.0, params.mu * params.static_load)
        a_sl = math.atan(3.0 * fy_max / c)
        alpha = np.sort(rng.uniform(0.0, 1.5, 64))
        f_pos = fiala_force(alpha, fy_max, c)
        f_neg = fiala_force(-alpha, fy_max, c)
        odd = float(np.max(np.abs(f_pos + f_neg)))
        over = float(np.max(np.abs(f_pos)) - fy_max)
        rise = float(np.max(np.diff(f_pos), initial=-np.inf))
        edge = abs(float(fiala_force(a_sl * (1 - 1e-12), fy_max, c)) + fy_max) / fy_max
        bad = odd > 1e-9 * fy_max or over > 1e-9 * fy_max or rise > 1e-9 * fy_max or edge > 1e-6
        worst = max(worst, odd / fy_max, max(over, 0.0) / fy_max, edge)
        failures += bool(bad)
    return failures, worst


def _frenet_rates_reference(x, u, v, kappa, params: VehicleParams):
    # numpy route through the body dynamics, independent of the compiled kernel
    s, d, dpsi, beta, r = x
    delta = wheel_angles_from_pose(float(u[0]), float(u[1]), params)
    _, beta_dot, r_dot = derivative_vbr((v, beta, r), delta, 0.0, params)
    s_dot = v * math.cos(dpsi) / (1.0 - d * kappa)
    return np.array([s_dot, v * math.sin(dpsi), r + beta_dot - kappa * s_dot, beta_dot, r_dot])


def _near_kink(x, u, v, params: VehicleParams, margin: float = 1e-3) -> bool:
    delta = wheel_angles_from_pose(float(u[0]), float(u[1]), params)
    beta, r = x[3], x[4]
    v_roll, v_side = tire_frame_velocities(v * math.cos(beta) - params.wheel_y * r,
                                           v * math.sin(beta) + params.wheel_x * r, np.sin(delta), np.cos(delta))
    alpha = slip_from_velocities(v_roll, v_side)
    a_sl = math.atan(3.0 * params.mu * params.static_load / params.cornering_stiffness)
    return bool(np.any(np.abs(np.abs(alpha) - a_sl) < margin))


def jacobian_fd(rng, cases: int, params: VehicleParams, tol: float = 1e-4):
    """Compiled Jacobians against a one-sided difference of the numpy model.

    Points are drawn from the operating envelope (commanded sideslip within
    10 deg of the actual one, moderate yaw rate), away from the Fiala kink at
    the sliding angle where the force is not differentiable.
    """
    model = PredictModel(params)
    worst, failures, done = 0.0, 0, 0
    h = 1e-7
    while done < cases:
        v = rng.uniform(1.0, 10.0)
        kappa = rng.uniform(-0.05, 0.05)
        beta = rng.uniform(-1.2, 1.2)
        x = np.array([rng.uniform(0, 100), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5),
                      beta, rng.uniform(-0.3, 0.3)])
        u = np.array([rng.uniform(-0.3, 0.3), beta + rng.uniform(-0.17, 0.17)])
        if _near_kink(x, u, v, params):
            continue
        done += 1
        A, B = model.jacobians(x, u, v, kappa)
        f0 = _frenet_rates_reference(x, u, v, kappa, params)
        J = np.hstack([A, B])
        J_ref = np.empty_like(J)
        z = np.concatenate([x, u])
        for j in range(N_X + N_U):
            step = h * max(1.0, abs(z[j]))
            zp = z.copy()
            zp[j] += step
            J_ref[:, j] = (_frenet_rates_reference(zp[:N_X], zp[N_X:], v, kappa, params) - f0) / step
        err = float(np.max(np.abs(J - J_ref)) / max(1.0, np.max(np.abs(J_ref))))
        worst = max(worst, err)
        failures += bool(err > tol)
    return failures, worst


def _random_qp(rng):
    n = int(rng.integers(2, 12))
    m = int(rng.integers(1, 10))
    L = rng.standard_normal((n, n))
    H = L @ L.T + 1e-2 * np.eye(n)
    g = rng.standard_normal(n)
    G = rng.standard_normal((m, n))
    z0 = rng.standard_normal(n)
    r = G @ z0
    l = r - rng.uniform(0.0, 1.0, m)
    u = r + rng.uniform(0.0, 1.0, m)
    l[rng.random(m) < 0.2] = -np.inf
    lb = z0 - rng.uniform(0.1, 2.0, n)
    ub = z0 + rng.uniform(0.1, 2.0, n)
    return QpProblem(H, g, G, l, u, lb, ub)


def qp_kkt(rng, cases: int, params: VehicleParams | None = None, tol: float = 1e-4):
    """Stationarity, feasibility and complementarity of solutions to random feasible QPs."""
    solver = DenseAdmmSolver(QpSettings())
    worst, failures = 0.0, 0
    for _ in range(cases):
        p = _random_qp(rng)
        sol = solver.solve(p)
        A, lo, hi = p.stacked()
        z, y = sol.z, sol.y
        scale = max(1.0, np.max(np.abs(p.H)), np.max(np.abs(p.g)))
        stat = np.max(np.abs(p.H @ z + p.g + A.T @ y)) / scale
        Az = A @ z
        feas = max(np.max(lo - Az), np.max(Az - hi), 0.0)
        # y > 0 only on active upper bounds, y < 0 only on active lower bounds
        comp_hi = np.max(np.where(y > 0, np.maximum(y, 0) * np.minimum(hi - Az, 1e3), 0.0), initial=0.0)
        comp_lo = np.max(np.where(y < 0, -np.minimum(y, 0) * np.minimum(Az - lo, 1e3), 0.0), initial=0.0)
        err = max(stat, feas, comp_hi / scale, comp_lo / scale)
        worst = max(worst, float(err))
        failures += bool(err > tol or sol.status is not QpStatus.OPTIMAL)
    return failures, worst


def _stable_matrix(rng, n: int = 4) -> np.ndarray:
    A = rng.standard_normal((n, n))
    return A * rng.uniform(0.2, 0.95) / max(abs(np.linalg.eigvals(A)))


def _contractive(rng, n: int = 4):
    while True:
        A = _stable_matrix(rng, n)
        Q = np.diag(rng.uniform(1e-4, 1e-1, n))
        R = np.diag(rng.uniform(1e-4, 1e-1, n))
        try:
            return A, Q, R, ErrorFilterState.initial(A, Q, R, rng.uniform(0.0, 0.1, n))
        except Exception:
            continue


def kalman_psd(rng, cases: int, params: VehicleParams | None = None, updates: int = 20):
    """Covariance stays symmetric positive semi-definite through repeated updates."""
    worst, failures = 0.0, 0
    for _ in range(cases):
        A, Q, R, st = _contractive(rng)
        for _ in range(updates):
            st = kalman_hysteresis_update(st, rng.standard_normal(4) * 0.05, A, Q, R, np.full(4, 1e-3))
        asym = float(np.max(np.abs(st.P - st.P.T)))
        low = float(np.min(np.linalg.eigvalsh(st.P)))
        bad = asym > 0 or low < -1e-12 * max(1.0, float(np.max(np.abs(st.P))))
        worst = max(worst, asym, -min(low, 0.0))
        failures += bool(bad)
    return failures, worst


def hysteresis_exactness(rng, cases: int, params: VehicleParams | None = None, updates: int = 20):
    """Held components move to the estimate exactly when the threshold is met, else stay bit-identical."""
    failures = 0
    for _ in range(cases):
        A, Q, R, st = _contractive(rng)
        eps = rng.uniform(0.0, 0.05, 4)
        for _ in range(updates):
            nxt = kalman_hysteresis_update(st, rng.standard_normal(4) * 0.05, A, Q, R, eps)
            moved = np.abs(nxt.e_hat - st.held) >= eps
            expect = np.where(moved, nxt.e_hat, st.held)
            if not np.array_equal(nxt.held, expect):
                failures += 1
                break
            st = nxt
    return failures, float(failures)


def deterministic_replay(rng, cases: int, params: VehicleParams, steps: int = 20):
    """Integrating the same commands from the same state twice is bit-identical."""
    plant = Plant(params)
    failures = 0
    for _ in range(cases):
        pose = _random_pose(rng, params)
        delta = wheel_angles_from_pose(pose.theta * 0.1, pose.beta, params)
        st = PlantState(rng.uniform(-50, 50), rng.uniform(-50, 50), rng.uniform(-3, 3),
                        rng.uniform(0.5, 10.0), rng.uniform(-0.1, 0.1), rng.uniform(-0.2, 0.2))
        v_ref = rng.uniform(0.5, 10.0)
        w = rng.standard_normal((2, steps)) * 0.01
        a = plant.advance(st, delta, v_ref, steps, w[0], w[1])
        b = plant.advance(st, delta, v_ref, steps, w[0].copy(), w[1].copy())
        failures += tuple(a) != tuple(b)
    return failures, float(failures)


def model_equivalence(rng, cases: int, params: VehicleParams, duration: float = 10.0, dt: float = 1e-3):
    """The (v_x, v_y, r) and (v, beta, r) models give the same trajectory after transformation."""
    worst, failures = 0.0, 0
    n = int(round(duration / dt))
    for _ in range(cases):
        pose = _random_pose(rng, params)
        delta = wheel_angles(SteerPose(0.2 * pose.theta, 0.5 * pose.beta), params).delta
        v = rng.uniform(1.0, 8.0)
        beta = rng.uniform(-0.1, 0.1) + 0.5 * pose.beta
        r = rng.uniform(-0.2, 0.2)
        fx = rng.uniform(-200.0, 200.0, params.n_wheels)
        xy = simulate_body((v * math.cos(beta), v * math.sin(beta), r), delta, fx, params, dt, n, "xy")
        vbr = simulate_body((v, beta, r), delta, fx, params, dt, n, "vbr")
        vx, vy = vbr.v * math.cos(vbr.beta), vbr.v * math.sin(vbr.beta)
        err = max(abs(vx - xy.vx), abs(vy - xy.vy), abs(vbr.r - xy.r))
        worst = max(worst, err)
        failures += bool(err > 1e-6)
    return failures, worst


SUITES = {
    "icr_perpendicularity": icr_perpendicularity,
    "pose_round_trip": pose_round_trip,
    "mode_consistency": mode_consistency,
    "fiala_properties": fiala_properties,
    "jacobian_fd": jacobian_fd,
    "qp_kkt": qp_kkt,
    "kalman_psd": kalman_psd,
    "hysteresis_exactness": hysteresis_exactness,
    "deterministic_replay": deterministic_replay,
}
EQUIVALENCE_CASES = 50


def run_suite(name: str, cases: int = 1000, seed: int = 0, params: VehicleParams | None = None) -> SuiteResult:
    params = params or VehicleParams()
    fn = model_equivalence if name == "model_equivalence" else SUITES[name]
    rng = np.random.default_rng([seed, len(name)] + [ord(c) for c in name])
    t0 = time.perf_counter()
    failures, worst = fn(rng, cases, params)
    return SuiteResult(name, cases, int(failures), float(worst), time.perf_counter() - t0)


def run_all(cases: int = 1000, seed: int = 0, params: VehicleParams | None = None,
            equivalence_cases: int = EQUIVALENCE_CASES) -> list:
    """Every invariant suite at ``cases`` cases, plus the 10 s model-equivalence runs."""
    out = [run_suite(name, cases, seed, params) for name in SUITES]
    if equivalence_cases:
        out.append(run_suite("model_equivalence", equivalence_cases, seed, params))
    return out
