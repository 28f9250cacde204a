"""Five-state Frenet predictive model, LTV linearization and discretization.

State ``x = [s, d, dpsi, beta, r]`` where ``dpsi`` is the velocity heading
relative to the path tangent; input ``u = [theta_R, beta_R]``. The forward
speed is held at ``v`` over the horizon and drive forces are neglected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .dynamics import V_MIN
from .errors import CurvatureTube, LowSpeedSingularity, NoSteadyState
from .params import VehicleParams

N_X = 5
N_U = 2
S, D, DPSI, BETA, R = range(N_X)
MIN_TUBE = 0.1  # smallest admissible 1 - d kappa
FD_REL_STEP = 1e-6


class PredictModel:
    """Compiled evaluation of the predictive model for one vehicle."""

    def __init__(self, params: VehicleParams, v_min: float = V_MIN):
        self.params = params
        self.v_min = v_min
        self._xw = np.ascontiguousarray(params.wheel_x, dtype=float)
        self._yw = np.ascontiguousarray(params.wheel_y, dtype=float)
        self._consts = (params.mass, params.yaw_inertia, params.cornering_stiffness,
                        params.mu, params.static_load)

    def _raw(self, x, u, v, kappa) -> np.ndarray:
        out = np.empty(N_X)
        _kernels.frenet_rates(x, float(u[0]), float(u[1]), v, kappa, self._xw, self._yw,
                              *self._consts, out)
        return out

    def derivative(self, x, u, v: float, kappa: float) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if v <= self.v_min:
            raise LowSpeedSingularity(f"v={v} <= v_min={self.v_min}")
        if 1.0 - x[D] * kappa <= MIN_TUBE:
            raise CurvatureTube(f"1 - d kappa = {1.0 - x[D] * kappa:.3f} <= {MIN_TUBE}")
        return self._raw(x, u, v, kappa)

    def jacobians(self, x0, u0, v: float, kappa: float, rel_step: float = FD_REL_STEP):
        """Central finite-difference (A_t, B_t) with step rel_step * max(1, |z_j|)."""
        x0 = np.asarray(x0, dtype=float)
        u0 = np.asarray(u0, dtype=float)
        self.derivative(x0, u0, v, kappa)
        A = np.empty((N_X, N_X))
        B = np.empty((N_X, N_U))
        _kernels.frenet_jacobian(x0, u0, v, kappa, self._xw, self._yw, *self._consts, rel_step, A, B)
        return A, B


def predict_derivative(x, u, v: float, kappa: float, params: VehicleParams) -> np.ndarray:
    return PredictModel(params).derivative(x, u, v, kappa)


def jacobians(x0, u0, v: float, kappa: float, params: VehicleParams, rel_step: float = FD_REL_STEP):
    return PredictModel(params).jacobians(x0, u0, v, kappa, rel_step)


@dataclass(frozen=True)
class LtvStep:
    """Affine discrete step ``x+ = A x + B u + c`` about (x0, u0)."""

    A: np.ndarray
    B: np.ndarray
    c: np.ndarray
    x0: np.ndarray
    u0: np.ndarray
    v: float = 0.0
    kappa: float = 0.0
    A_t: np.ndarray | None = None
    B_t: np.ndarray | None = None
    c_t: np.ndarray | None = None  # continuous affine term f0 - A_t x0 - B_t u0

    def step(self, x, u) -> np.ndarray:
        return self.A @ x + self.B @ u + self.c


def discretize(A_t, B_t, f0, x0, u0, T: float, substeps: int = 1, v: float = 0.0,
               kappa: float = 0.0) -> LtvStep:
    """Euler discretization of the linearized model.

    With ``substeps = 1`` this is ``A = I + A_t T``, ``B = B_t T`` and
    ``c = T (f0 - A_t x0 - B_t u0)``. Larger values compose that many Euler
    steps of length T / substeps, which keeps stiff yaw modes stable.
    """
    if T <= 0:
        raise ValueError("T must be positive")
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    A_t = np.asarray(A_t, dtype=float)
    B_t = np.asarray(B_t, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    u0 = np.asarray(u0, dtype=float)
    n = A_t.shape[0]
    c_t = np.asarray(f0, dtype=float) - A_t @ x0 - B_t @ u0
    h = T / substeps
    Ah = np.eye(n) + h * A_t
    if substeps == 1:
        return LtvStep(Ah, h * B_t, h * c_t, x0, u0, v, kappa, A_t, B_t, c_t)
    power = np.eye(n)
    total = np.zeros((n, n))
    for _ in range(substeps):
        total += power
        power = Ah @ power
    return LtvStep(power, h * total @ B_t, h * total @ c_t, x0, u0, v, kappa, A_t, B_t, c_t)


def output_selector(heading_mode: str = "body") -> np.ndarray:
    """Matrix mapping the state onto tracked outputs.

    In body mode the heading row becomes ``dpsi - beta``, the body yaw
    relative to the path tangent.
    """
    S_ = np.eye(N_X)
    if heading_mode == "body":
        S_[DPSI, BETA] = -1.0
    elif heading_mode != "velocity":
        raise ValueError(f"unknown heading mode {heading_mode!r}")
    return S_


def steady_state_input(model: PredictModel, v: float, kappa: float, heading_ref: float,
                       heading_ref_slope: float = 0.0, heading_mode: str = "body",
                       tol: float = 1e-10, max_iter: int = 30, seed=None) -> np.ndarray:
    """Steering pose holding the vehicle on the path at the reference heading.

    On the path with the output heading at its reference, the sideslip and yaw
    rate are fixed; Newton's method then finds (theta_R, beta_R) zeroing the
    sideslip and yaw accelerations. Seeded with the kinematic pose unless
    ``seed`` is given.
    """
    if heading_mode == "body":
        beta = -heading_ref
        dpsi = 0.0
    else:
        beta = 0.0
        dpsi = heading_ref
    yaw_rate = v * (kappa + heading_ref_slope)
    x = np.array([0.0, 0.0, dpsi, beta, yaw_rate])
    u0 = np.array([math.atan(kappa + heading_ref_slope), beta]) if seed is None else np.array(seed, dtype=float)
    u, res = _kernels.steady_pose(x, u0, v, kappa, model._xw, model._yw, *model._consts, tol, max_iter)
    if res < 1e-6:
        return u
    raise NoSteadyState(f"no steady pose for kappa={kappa}, heading_ref={heading_ref}")


@dataclass(frozen=True)
class Horizon:
    steps: tuple  # N LtvSteps
    states: np.ndarray  # (N + 1, 5) linearization trajectory
    controls: np.ndarray  # (N, 2) seed used for linearization
    kappa: np.ndarray  # (N,)
    heading_ref: np.ndarray  # (N + 1,) at predicted arc lengths
    T: float

    @property
    def N(self) -> int:
        return len(self.steps)


def build_horizon(model: PredictModel, x0, seed, path, v: float, T: float, N: int,
                  substeps: int = 1) -> Horizon:
    """Linearize along the nonlinear rollout of a seed control sequence.

    The curvature of each interval is sampled at its predicted arc length.
    Rollout and discretization use the same Euler substeps.
    """
    if N < 2:
        raise ValueError("N must be >= 2")
    seed = np.asarray(seed, dtype=float)
    if seed.shape != (N, N_U):
        raise ValueError(f"seed must have shape ({N}, {N_U})")
    xs = np.empty((N + 1, N_X))
    xs[0] = np.asarray(x0, dtype=float)
    kappas = np.empty(N)
    steps = []
    h = T / substeps
    for k in range(N):
        xk = xs[k]
        kappa = float(path.curvature_at(xk[S]))
        kappas[k] = kappa
        f0 = model.derivative(xk, seed[k], v, kappa)
        A_t, B_t = model.jacobians(xk, seed[k], v, kappa)
        steps.append(discretize(A_t, B_t, f0, xk, seed[k], T, substeps, v, kappa))
        x = xk.copy()
        for j in range(substeps):
            f = f0 if j == 0 else model._raw(x, seed[k], v, kappa)
            x = x + h * f
        xs[k + 1] = x
    refs = np.asarray(path.heading_ref_at(xs[:, S]), dtype=float)
    return Horizon(tuple(steps), xs, seed.copy(), kappas, refs, T)
