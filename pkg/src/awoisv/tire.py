"""Fiala brush tire with friction-circle derating and slip-angle evaluation."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateWheelSpeed, InvalidLoad
from .params import VehicleParams

MIN_WHEEL_SPEED = 1e-6  # m/s


@dataclass(frozen=True)
class TireState:
    alpha: float
    fz: float
    fx: float
    fy: float
    fy_max: float
    alpha_sl: float
    effective_stiffness: float  # fy / alpha; -C_alpha at alpha = 0


def fiala_force(alpha, fy_max, c_alpha):
    """Vectorized Fiala lateral force for given saturation limits.

    Below the sliding angle ``atan(3 fy_max / C)`` the cubic brush
    polynomial in tan(alpha) applies; above it the force is pinned at
    ``-fy_max sgn(alpha)``.
    """
    alpha = np.asarray(alpha, dtype=float)
    fy_max = np.asarray(fy_max, dtype=float)
    t = np.tan(alpha)
    with np.errstate(divide="ignore", invalid="ignore"):
        k = c_alpha / fy_max
        poly = -c_alpha * t * (1.0 - k * np.abs(t) / 3.0 + (k * t) ** 2 / 27.0)
    sliding = np.abs(alpha) >= np.arctan(3.0 * fy_max / c_alpha)
    return np.where(sliding, -fy_max * np.sign(alpha), poly)


def saturation_limit(fz, fx, mu):
    """sqrt((mu Fz)^2 - Fx^2), with Fx already clamped to the friction circle."""
    return np.sqrt(np.maximum((mu * fz) ** 2 - np.square(fx), 0.0))


def fiala_lateral_force(alpha: float, fz: float, fx: float, params: VehicleParams) -> TireState:
    if fz <= 0:
        raise InvalidLoad(f"vertical load must be positive, got {fz}")
    limit = params.mu * fz
    if abs(fx) > limit:
        warnings.warn(f"|Fx|={abs(fx):.1f} N exceeds mu*Fz={limit:.1f} N; clamped", RuntimeWarning)
        fx = math.copysign(limit, fx)
    c = params.cornering_stiffness
    fy_max = float(saturation_limit(fz, fx, params.mu))
    alpha_sl = math.atan(3.0 * fy_max / c)
    fy = float(fiala_force(alpha, fy_max, c)) if fy_max > 0 else 0.0
    stiffness = -c if alpha == 0.0 else fy / alpha
    return TireState(alpha, fz, fx, fy, fy_max, alpha_sl, stiffness)


def tire_frame_velocities(vtx, vty, sin_d, cos_d):
    """Rolling (along-heading) and lateral components of each wheel-centre velocity.

    ``vtx = v_x - y r`` and ``vty = v_y + x r`` are the wheel-centre velocity
    in body axes.
    """
    v_roll = vtx * cos_d + vty * sin_d
    v_side = -vtx * sin_d + vty * cos_d
    return v_roll, v_side


def slip_from_velocities(v_roll, v_side, strict: bool = False):
    """Small-angle slip: lateral over rolling speed.

    The rolling speed enters by magnitude so a wheel rolling backwards still
    gets a restoring force. Wheels slower than MIN_WHEEL_SPEED get zero slip.
    """
    mag = np.abs(v_roll)
    degenerate = mag < MIN_WHEEL_SPEED
    if strict and np.any(degenerate):
        raise DegenerateWheelSpeed("wheel rolling speed below 1e-6 m/s")
    return np.where(degenerate, 0.0, v_side / np.where(degenerate, 1.0, mag))


def tire_slip_angles(state, wheels, params: VehicleParams, strict: bool = False) -> np.ndarray:
    """Slip angle of every wheel for a body state given as (v_x, v_y, r)."""
    vx, vy, r = state
    vtx = vx - params.wheel_y * r
    vty = vy + params.wheel_x * r
    v_roll, v_side = tire_frame_velocities(vtx, vty, np.sin(wheels.delta), np.cos(wheels.delta))
    return slip_from_velocities(v_roll, v_side, strict=strict)
