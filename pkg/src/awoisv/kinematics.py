"""ICR geometry, the theta_R/beta_R steering representation and motion modes.

The ICR is written in body coordinates as (B0, C0) with x forward and y to
the left. A steering pose (theta_R, beta_R) maps to it through
``B0 = -cot(theta_R) sin(beta_R)`` and ``C0 = cot(theta_R) cos(beta_R)``;
``theta_R = 0`` places the ICR at infinity in the direction ``beta_R``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import NamedTuple, Union

import numpy as np

from .errors import ExcludedIcr
from .params import VehicleParams

HALF_PI = 0.5 * math.pi
BOUNDARY_TOL = 1e-9


class WheelIndex(NamedTuple):
    axle: int  # 1-based
    side: str  # "L" or "R"

    def flat(self, params: VehicleParams) -> int:
        if not 1 <= self.axle <= params.n_axles or self.side not in ("L", "R"):
            raise IndexError(f"no wheel {self.axle}{self.side}")
        return 2 * (self.axle - 1) + (0 if self.side == "L" else 1)


class IcrFinite(NamedTuple):
    b0: float
    c0: float


class IcrAtInfinity(NamedTuple):
    direction: float  # beta_0, normalized to (-pi/2, pi/2]


IcrPosition = Union[IcrFinite, IcrAtInfinity]


class ApproachSide(enum.Enum):
    """Side from which C0 reached a wheel's y coordinate."""

    FROM_BELOW = "below"
    FROM_ABOVE = "above"


class MotionMode(enum.Enum):
    LoSDM = "longitudinal straight driving"
    DSDM = "diagonal straight driving"
    LaSDM = "lateral straight driving"
    LoSM = "longitudinal steering"
    LaSM = "lateral steering"
    PSM = "pivot steering"


def _normalize_half(angle: float) -> float:
    """Fold an angle onto (-pi/2, pi/2]."""
    a = math.remainder(angle, math.pi)
    if a <= -HALF_PI:
        a += math.pi
    return a


@dataclass(frozen=True)
class SteerPose:
    theta: float  # theoretical steering radius angle, rad
    beta: float  # theoretical sideslip angle, rad

    def __post_init__(self):
        if not -HALF_PI < self.theta < HALF_PI:
            raise ValueError(f"theta_R={self.theta} outside (-pi/2, pi/2)")
        if not -HALF_PI < self.beta <= HALF_PI:
            raise ValueError(f"beta_R={self.beta} outside (-pi/2, pi/2]")

    @property
    def as_array(self) -> np.ndarray:
        return np.array([self.theta, self.beta])

    def lateral_icr(self) -> float:
        """cot(theta_R) cos(beta_R), i.e. C0; +inf when theta_R = 0."""
        if self.theta == 0.0:
            return math.copysign(math.inf, math.cos(self.beta))
        return math.cos(self.beta) / math.tan(self.theta)

    def validate(self, params: VehicleParams) -> "SteerPose":
        """Reject poses in the excluded set |cot(theta_R) cos(beta_R)| = M/2."""
        if self.theta != 0.0 and abs(abs(self.lateral_icr()) - 0.5 * params.track) <= BOUNDARY_TOL:
            raise ExcludedIcr(f"ICR on a wheel line for pose {self}")
        return self


@dataclass(frozen=True)
class WheelSteering:
    """Per-wheel steering angles with their sine/cosine pair."""

    delta: np.ndarray

    def __post_init__(self):
        d = np.array(self.delta, dtype=float)
        d.flags.writeable = False
        object.__setattr__(self, "delta", d)

    @property
    def sin(self) -> np.ndarray:
        return np.sin(self.delta)

    @property
    def cos(self) -> np.ndarray:
        return np.cos(self.delta)


def icr_from_steer_pose(pose: SteerPose, params: VehicleParams | None = None) -> IcrPosition:
    if params is not None:
        pose.validate(params)
    if pose.theta == 0.0:
        return IcrAtInfinity(_normalize_half(pose.beta))
    cot = 1.0 / math.tan(pose.theta)
    return IcrFinite(-cot * math.sin(pose.beta), cot * math.cos(pose.beta))


def steer_pose_from_icr(icr: IcrPosition) -> SteerPose:
    """Invert the pose-to-ICR map; left turns (C0 > 0) give theta_R > 0."""
    if isinstance(icr, IcrAtInfinity):
        return SteerPose(0.0, _normalize_half(icr.direction))
    b0, c0 = icr
    r0 = math.hypot(b0, c0)
    if r0 == 0.0:
        raise ValueError("ICR at the centre of gravity has no finite theta_R")
    if c0 == 0.0:
        # cos(beta_R) = 0 forces beta_R = pi/2 on the half-open range, so cot = -B0.
        return SteerPose(math.atan(-1.0 / b0), HALF_PI)
    cot = math.copysign(r0, c0)
    return SteerPose(math.atan(1.0 / cot), math.atan(-b0 / c0))


def _boundary_angle(b0: float, x: float, approach: ApproachSide) -> float:
    if b0 == x:
        return 0.0
    below = -HALF_PI if b0 > x else HALF_PI
    return below if approach is ApproachSide.FROM_BELOW else -below


def wheel_angles(
    icr: IcrPosition | SteerPose,
    params: VehicleParams,
    approach: ApproachSide = ApproachSide.FROM_BELOW,
) -> WheelSteering:
    """Steering angle of every wheel so its heading is perpendicular to the ICR radius."""
    xw, yw = params.wheel_x, params.wheel_y
    if isinstance(icr, SteerPose):
        return WheelSteering(wheel_angles_from_pose(icr.theta, icr.beta, params))
    if isinstance(icr, IcrAtInfinity):
        return WheelSteering(np.full(params.n_wheels, _normalize_half(icr.direction)))
    b0, c0 = icr
    delta = np.empty(params.n_wheels)
    for k in range(params.n_wheels):
        den = c0 - yw[k]
        if den == 0.0:
            delta[k] = _boundary_angle(b0, xw[k], approach)
        else:
            delta[k] = math.atan((xw[k] - b0) / den)
    return WheelSteering(delta)


def wheel_angles_from_pose(theta: float, beta: float, params: VehicleParams) -> np.ndarray:
    """Wheel angles straight from (theta_R, beta_R), free of the cot singularity.

    Multiplying numerator and denominator of the ICR form by tan(theta_R)
    gives ``atan2(x tan(theta) + sin(beta), cos(beta) - y tan(theta))``,
    folded back onto [-pi/2, pi/2].
    """
    t = math.tan(theta)
    delta = np.arctan2(params.wheel_x * t + math.sin(beta), math.cos(beta) - params.wheel_y * t)
    delta = np.where(delta > HALF_PI, delta - math.pi, delta)
    return np.where(delta < -HALF_PI, delta + math.pi, delta)


def classify_icr(icr: IcrPosition, params: VehicleParams) -> MotionMode:
    """Motion mode from the (B0, C0) columns of the mode table."""
    half = 0.5 * params.track
    if isinstance(icr, IcrAtInfinity):
        d = _normalize_half(icr.direction)
        if d == 0.0:
            return MotionMode.LoSDM
        if d == HALF_PI:
            return MotionMode.LaSDM
        return MotionMode.DSDM
    b0, c0 = icr
    if abs(abs(c0) - half) <= BOUNDARY_TOL:
        raise ExcludedIcr(f"C0={c0} on a wheel line")
    if abs(c0) > half:
        return MotionMode.LoSM
    if params.axle_x[-1] < b0 < params.axle_x[0]:
        return MotionMode.PSM
    return MotionMode.LaSM


def classify_mode(pose: SteerPose, params: VehicleParams) -> MotionMode:
    """Motion mode from the (theta_R, beta_R) columns of the mode table."""
    if pose.theta == 0.0:
        if pose.beta == 0.0:
            return MotionMode.LoSDM
        if abs(pose.beta) == HALF_PI:
            return MotionMode.LaSDM
        return MotionMode.DSDM
    half = 0.5 * params.track
    cot = 1.0 / math.tan(pose.theta)
    lateral = cot * math.cos(pose.beta)
    if abs(abs(lateral) - half) <= BOUNDARY_TOL:
        raise ExcludedIcr(f"pose {pose} puts the ICR on a wheel line")
    if abs(lateral) > half:
        return MotionMode.LoSM
    longitudinal = -cot * math.sin(pose.beta)
    if params.axle_x[-1] < longitudinal < params.axle_x[0]:
        return MotionMode.PSM
    return MotionMode.LaSM


def kinematic_yaw_rate(v: float, theta: float) -> float:
    """Yaw rate of pure rolling about the ICR at forward speed v: v tan(theta_R)."""
    return v * math.tan(theta)
