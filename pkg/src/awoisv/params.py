from dataclasses import asdict, dataclass, fields
from functools import cached_property

import numpy as np


@dataclass(frozen=True)
class VehicleParams:
    """Rigid-body and tire parameters of a multi-axle AWOISV.

    Defaults describe the four-axle, eight-wheel test vehicle. Wheels are
    ordered axle by axle, left before right: 1L, 1R, 2L, 2R, ...
    """

    mass: float = 10_000.0  # kg
    yaw_inertia: float = 34_823.0  # kg m^2
    axle_x: tuple = (3.55, 1.75, -1.75, -3.55)  # m, front to rear
    track: float = 2.72  # m
    cornering_stiffness: float = 40_000.0  # N/rad, per tire
    mu: float = 0.85
    rolling_radius: float = 0.35  # m
    cg_height: float = 1.21  # m
    g: float = 9.81  # m/s^2

    def __post_init__(self):
        object.__setattr__(self, "axle_x", tuple(float(a) for a in self.axle_x))
        if self.mass <= 0 or self.yaw_inertia <= 0:
            raise ValueError("mass and yaw inertia must be positive")
        if self.track <= 0:
            raise ValueError("track width must be positive")
        if len(self.axle_x) < 2 or np.any(np.diff(self.axle_x) >= 0):
            raise ValueError("need >= 2 axles with x strictly decreasing front to rear")
        if self.cornering_stiffness <= 0:
            raise ValueError("cornering stiffness must be positive")
        if not 0 < self.mu <= 1.5:
            raise ValueError("friction coefficient must lie in (0, 1.5]")

    @property
    def n_axles(self) -> int:
        return len(self.axle_x)

    @property
    def n_wheels(self) -> int:
        return 2 * len(self.axle_x)

    @cached_property
    def wheel_x(self) -> np.ndarray:
        x = np.repeat(np.asarray(self.axle_x), 2)
        x.flags.writeable = False
        return x

    @cached_property
    def wheel_y(self) -> np.ndarray:
        y = np.tile([0.5 * self.track, -0.5 * self.track], self.n_axles)
        y.flags.writeable = False
        return y

    @property
    def wheel_names(self) -> list:
        return [f"{i + 1}{side}" for i in range(self.n_axles) for side in "LR"]

    @property
    def static_load(self) -> float:
        """Vertical load per wheel, N. Static and equal for every wheel."""
        return self.mass * self.g / self.n_wheels

    def scaled(self, **factors) -> "VehicleParams":
        """Copy with selected scalar fields multiplied, e.g. ``scaled(cornering_stiffness=0.8)``."""
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        for name, k in factors.items():
            if name not in values or name == "axle_x":
                raise KeyError(name)
            values[name] = values[name] * k
        return VehicleParams(**values)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["axle_x"] = list(self.axle_x)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "VehicleParams":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown vehicle fields: {sorted(unknown)}")
        return cls(**d)
