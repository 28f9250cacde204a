"""Nonlinear planar body dynamics in (v_x, v_y, r) and (v, beta, r) form.

Tire forces act in each wheel frame: Fx along the wheel heading, Fy to its
left. Theta = sin(delta) and Xi = cos(delta) are the per-wheel sine/cosine
pair. Both derivative forms share the same tire evaluation and differ only
in how the body-frame force balance is written, which lets one be checked
against the other.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .errors import LowSpeedSingularity
from .kinematics import SteerPose, WheelSteering, wheel_angles_from_pose
from .params import VehicleParams
from .tire import fiala_force, saturation_limit, slip_from_velocities, tire_frame_velocities

V_MIN = 0.1  # m/s; below this the sideslip equation is singular
SPEED_GAIN = 0.5  # 1/s, plant speed regulator
FX_FRACTION = 0.5  # per-wheel |Fx| limit as a fraction of mu Fz


class BodyStateXY(NamedTuple):
    vx: float
    vy: float
    r: float


class BodyStateVBR(NamedTuple):
    v: float
    beta: float
    r: float

    def to_xy(self) -> BodyStateXY:
        return BodyStateXY(self.v * math.cos(self.beta), self.v * math.sin(self.beta), self.r)

    @classmethod
    def from_xy(cls, s: BodyStateXY) -> "BodyStateVBR":
        return cls(math.hypot(s.vx, s.vy), math.atan2(s.vy, s.vx), s.r)


class GlobalPose(NamedTuple):
    X: float
    Y: float
    psi: float  # body yaw

    def course(self, beta: float) -> float:
        """Velocity heading psi + beta, wrapped to (-pi, pi]."""
        return wrap_angle(self.psi + beta)


class PlantState(NamedTuple):
    X: float
    Y: float
    psi: float
    v: float
    beta: float
    r: float

    @property
    def pose(self) -> GlobalPose:
        return GlobalPose(self.X, self.Y, self.psi)

    @property
    def body(self) -> BodyStateVBR:
        return BodyStateVBR(self.v, self.beta, self.r)


def wrap_angle(a):
    """Wrap to (-pi, pi]."""
    w = np.mod(np.asarray(a) + np.pi, 2.0 * np.pi) - np.pi
    w = np.where(w == -np.pi, np.pi, w)
    return float(w) if np.ndim(w) == 0 else w


def steering_angles(steering, params: VehicleParams) -> np.ndarray:
    if isinstance(steering, SteerPose):
        return wheel_angles_from_pose(steering.theta, steering.beta, params)
    if isinstance(steering, WheelSteering):
        return steering.delta
    delta = np.asarray(steering, dtype=float)
    if delta.shape != (params.n_wheels,):
        raise ValueError(f"expected {params.n_wheels} wheel angles, got shape {delta.shape}")
    return delta


def _fx_array(fx, params: VehicleParams) -> np.ndarray:
    fx = np.broadcast_to(np.asarray(fx, dtype=float), (params.n_wheels,))
    limit = params.mu * params.static_load
    return np.clip(fx, -limit, limit)


def lateral_forces(vtx, vty, sin_d, cos_d, fx, params: VehicleParams) -> np.ndarray:
    v_roll, v_side = tire_frame_velocities(vtx, vty, sin_d, cos_d)
    alpha = slip_from_velocities(v_roll, v_side)
    fy_max = saturation_limit(params.static_load, fx, params.mu)
    return fiala_force(alpha, fy_max, params.cornering_stiffness)


def derivative_vxvyr(state, steering, fx, params: VehicleParams) -> BodyStateXY:
    """Time derivative of (v_x, v_y, r) from the body-frame force balance."""
    vx, vy, r = state
    delta = steering_angles(steering, params)
    sin_d, cos_d = np.sin(delta), np.cos(delta)
    fx = _fx_array(fx, params)
    xw, yw = params.wheel_x, params.wheel_y
    fy = lateral_forces(vx - yw * r, vy + xw * r, sin_d, cos_d, fx, params)
    f_long = fx * cos_d - fy * sin_d
    f_lat = fx * sin_d + fy * cos_d
    m = params.mass
    return BodyStateXY(
        float(np.sum(f_long)) / m + r * vy,
        float(np.sum(f_lat)) / m - r * vx,
        float(np.sum(xw * f_lat - yw * f_long)) / params.yaw_inertia,
    )


def _vbr_rates(v, beta, r, sin_d, cos_d, fx, params: VehicleParams):
    xw, yw = params.wheel_x, params.wheel_y
    cb, sb = math.cos(beta), math.sin(beta)
    fy = lateral_forces(v * cb - yw * r, v * sb + xw * r, sin_d, cos_d, fx, params)
    m = params.mass
    v_dot = np.sum((-sin_d * cb + cos_d * sb) * fy + (cos_d * cb + sin_d * sb) * fx) / m
    side = np.sum((cos_d * cb + sin_d * sb) * fy + (sin_d * cb - cos_d * sb) * fx) / m
    r_dot = np.sum((cos_d * xw + sin_d * yw) * fy + (sin_d * xw - cos_d * yw) * fx) / params.yaw_inertia
    return float(v_dot), float(side), float(r_dot)


def derivative_vbr(state, steering, fx, params: VehicleParams, v_min: float = V_MIN) -> BodyStateVBR:
    """Time derivative of (v, beta, r), the forward-speed/sideslip/yaw-rate model."""
    v, beta, r = state
    if v <= v_min:
        raise LowSpeedSingularity(f"v={v} <= v_min={v_min}")
    delta = steering_angles(steering, params)
    v_dot, side, r_dot = _vbr_rates(v, beta, r, np.sin(delta), np.cos(delta), _fx_array(fx, params), params)
    return BodyStateVBR(v_dot, side / v - r, r_dot)


def speed_regulator(state: PlantState, v_ref: float, delta, params: VehicleParams,
                    gain: float = SPEED_GAIN) -> np.ndarray:
    """Per-wheel drive force holding forward speed near v_ref.

    Total force ``gain * m * (v_ref - v)`` is split equally over the wheels
    and applied along each wheel's direction of travel, clamped to a fraction
    of the friction limit.
    """
    total = gain * params.mass * (v_ref - state.v)
    cb, sb = math.cos(state.beta), math.sin(state.beta)
    v_roll, _ = tire_frame_velocities(
        state.v * cb - params.wheel_y * state.r, state.v * sb + params.wheel_x * state.r,
        np.sin(delta), np.cos(delta))
    direction = np.where(v_roll >= 0.0, 1.0, -1.0)
    limit = FX_FRACTION * params.mu * params.static_load
    return np.clip(direction * total / params.n_wheels, -limit, limit)


def _plant_rates(y, sin_d, cos_d, fx, params, w_beta, w_r, v_min):
    X, Y, psi, v, beta, r = y
    v_dot, side, r_dot = _vbr_rates(v, beta, r, sin_d, cos_d, fx, params)
    beta_dot = side / v - r + w_beta if v > v_min else 0.0
    course = psi + beta
    return np.array([v * math.cos(course), v * math.sin(course), r, v_dot, beta_dot, r_dot + w_r])


def integrate_plant(state: PlantState, steering, fx, params: VehicleParams, dt: float,
                    disturbance=(0.0, 0.0), v_min: float = V_MIN) -> PlantState:
    """One fixed RK4 step of the body dynamics plus the global pose kinematics.

    ``disturbance`` is added to the (beta, r) derivatives and held over the
    step. Below ``v_min`` the sideslip is frozen.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    delta = steering_angles(steering, params)
    sin_d, cos_d = np.sin(delta), np.cos(delta)
    fx = _fx_array(fx, params)
    wb, wr = disturbance
    y0 = np.array(state, dtype=float)
    k1 = _plant_rates(y0, sin_d, cos_d, fx, params, wb, wr, v_min)
    k2 = _plant_rates(y0 + 0.5 * dt * k1, sin_d, cos_d, fx, params, wb, wr, v_min)
    k3 = _plant_rates(y0 + 0.5 * dt * k2, sin_d, cos_d, fx, params, wb, wr, v_min)
    k4 = _plant_rates(y0 + dt * k3, sin_d, cos_d, fx, params, wb, wr, v_min)
    y1 = y0 + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return PlantState(y1[0], y1[1], wrap_angle(y1[2]), max(y1[3], 0.0), wrap_angle(y1[4]), y1[5])


def integrate_xy(state: BodyStateXY, steering, fx, params: VehicleParams, dt: float) -> BodyStateXY:
    """RK4 step of the (v_x, v_y, r) model alone; used to cross-check the (v, beta, r) form."""
    delta = steering_angles(steering, params)
    y0 = np.array(state, dtype=float)

    def f(y):
        return np.array(derivative_vxvyr(y, delta, fx, params))

    k1 = f(y0)
    k2 = f(y0 + 0.5 * dt * k1)
    k3 = f(y0 + 0.5 * dt * k2)
    k4 = f(y0 + dt * k3)
    return BodyStateXY(*(y0 + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)))


def integrate_vbr(state: BodyStateVBR, steering, fx, params: VehicleParams, dt: float) -> BodyStateVBR:
    delta = steering_angles(steering, params)
    y0 = np.array(state, dtype=float)

    def f(y):
        return np.array(derivative_vbr(y, delta, fx, params))

    k1 = f(y0)
    k2 = f(y0 + 0.5 * dt * k1)
    k3 = f(y0 + 0.5 * dt * k2)
    k4 = f(y0 + dt * k3)
    return BodyStateVBR(*(y0 + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)))


def simulate_body(state, steering, fx, params: VehicleParams, dt: float, n_steps: int, form: str = "vbr"):
    """Compiled RK4 run of the body model alone with fixed wheel angles and drive forces.

    ``form`` selects the (v_x, v_y, r) or (v, beta, r) state; both run the
    same tires so the pair can be checked against each other.
    """
    from . import _kernels

    if dt <= 0:
        raise ValueError("dt must be positive")
    delta = steering_angles(steering, params)
    y = _kernels.body_steps(np.array(state, dtype=float), np.sin(delta), np.cos(delta), _fx_array(fx, params),
                            np.ascontiguousarray(params.wheel_x), np.ascontiguousarray(params.wheel_y),
                            params.mass, params.yaw_inertia, params.cornering_stiffness, params.mu,
                            params.static_load, dt, int(n_steps), 0 if form == "xy" else 1)
    return BodyStateXY(*y) if form == "xy" else BodyStateVBR(*y)


class Plant:
    """Fixed-step RK4 plant with a proportional speed regulator.

    Wraps the compiled scalar kernels; ``advance`` integrates a whole control
    period per call with the wheel angles held.
    """

    def __init__(self, params: VehicleParams, dt: float = 1e-3, speed_gain: float = SPEED_GAIN,
                 v_min: float = V_MIN):
        if dt <= 0:
            raise ValueError("dt must be positive")
        self.params = params
        self.dt = dt
        self.speed_gain = speed_gain
        self.v_min = v_min
        self._xw = np.ascontiguousarray(params.wheel_x, dtype=float)
        self._yw = np.ascontiguousarray(params.wheel_y, dtype=float)
        self._fx_limit = FX_FRACTION * params.mu * params.static_load
        self.last_fx = np.zeros(params.n_wheels)

    def advance(self, state: PlantState, delta, v_ref: float, n_steps: int,
                w_beta=None, w_r=None) -> PlantState:
        from . import _kernels

        p = self.params
        delta = np.asarray(delta, dtype=float)
        wb = np.zeros(n_steps) if w_beta is None else np.ascontiguousarray(w_beta, dtype=float)
        wr = np.zeros(n_steps) if w_r is None else np.ascontiguousarray(w_r, dtype=float)
        y, fx = _kernels.regulated_steps(
            np.array(state, dtype=float), np.sin(delta), np.cos(delta), self._xw, self._yw,
            p.mass, p.yaw_inertia, p.cornering_stiffness, p.mu, p.static_load, self.dt,
            float(v_ref), self.speed_gain, self._fx_limit, wb, wr, self.v_min)
        self.last_fx = fx
        return PlantState(*(float(a) for a in y))
