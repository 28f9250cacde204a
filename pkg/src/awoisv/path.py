"""Arc-length parameterized reference paths and Frenet projection.

Paths are stored as uniform samples over arc length. Heading is kept
unwrapped internally so interpolation never crosses a branch cut; it is
wrapped on output.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.interpolate import CubicSpline

from .dynamics import GlobalPose, wrap_angle
from .errors import DegeneratePath, OutOfRange, ProjectionLost

DEFAULT_DS = 0.1  # m
NEWTON_MAX_ITER = 10
NEWTON_TOL = 1e-9
FALLBACK_WINDOW = 5.0  # m either side of the hint
S_TOL = 1e-6


class PathSample(NamedTuple):
    X: float
    Y: float
    heading: float
    curvature: float
    heading_ref: float


class FrenetState(NamedTuple):
    s: float
    d: float  # left positive
    heading_error: float  # velocity heading minus path heading

    def body_heading_error(self, beta: float) -> float:
        return wrap_angle(self.heading_error - beta)


@dataclass(frozen=True, eq=False)
class ReferencePath:
    s: np.ndarray
    X: np.ndarray
    Y: np.ndarray
    heading_unwrapped: np.ndarray
    curvature: np.ndarray
    heading_ref: np.ndarray

    def __post_init__(self):
        n = len(self.s)
        if n < 2:
            raise DegeneratePath("need at least two samples")
        for name in ("X", "Y", "heading_unwrapped", "curvature", "heading_ref"):
            arr = np.array(getattr(self, name), dtype=float)
            if arr.shape != (n,):
                raise ValueError(f"{name} must have {n} samples")
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        s = np.array(self.s, dtype=float)
        if s[0] != 0.0 or np.any(np.diff(s) <= 0):
            raise DegeneratePath("arc length must start at 0 and increase strictly")
        s.flags.writeable = False
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "_spline_x", CubicSpline(s, self.X))
        object.__setattr__(self, "_spline_y", CubicSpline(s, self.Y))

    @property
    def length(self) -> float:
        return float(self.s[-1])

    @property
    def ds(self) -> float:
        return float(self.s[1] - self.s[0])

    @property
    def heading(self) -> np.ndarray:
        return wrap_angle(self.heading_unwrapped)

    @property
    def max_abs_curvature(self) -> float:
        return float(np.max(np.abs(self.curvature)))

    def sample(self, s: float) -> PathSample:
        if not -S_TOL <= s <= self.length + S_TOL:
            raise OutOfRange(f"s={s} outside [0, {self.length}]")
        return self.sample_clamped(s)

    def sample_clamped(self, s: float) -> PathSample:
        """Like ``sample`` but holds the end values outside [0, L]."""
        s = min(max(float(s), 0.0), self.length)
        return PathSample(
            float(self._spline_x(s)),
            float(self._spline_y(s)),
            wrap_angle(np.interp(s, self.s, self.heading_unwrapped)),
            float(np.interp(s, self.s, self.curvature)),
            float(np.interp(s, self.s, self.heading_ref)),
        )

    def curvature_at(self, s):
        return np.interp(np.clip(s, 0.0, self.length), self.s, self.curvature)

    def heading_ref_at(self, s):
        return np.interp(np.clip(s, 0.0, self.length), self.s, self.heading_ref)

    def to_frenet_xy(self, s: float, d: float) -> tuple[float, float]:
        """Cartesian point at arc length s and signed offset d."""
        x, y = self._point(s)
        tx, ty = self._tangent(s)
        return x - d * ty, y + d * tx

    # projection

    def _point(self, s):
        return float(self._spline_x(s)), float(self._spline_y(s))

    def _tangent(self, s):
        dx, dy = float(self._spline_x(s, 1)), float(self._spline_y(s, 1))
        n = math.hypot(dx, dy)
        return dx / n, dy / n

    def _newton(self, X: float, Y: float, s: float):
        for _ in range(NEWTON_MAX_ITER):
            ex, ey = float(self._spline_x(s)) - X, float(self._spline_y(s)) - Y
            d1x, d1y = float(self._spline_x(s, 1)), float(self._spline_y(s, 1))
            d2x, d2y = float(self._spline_x(s, 2)), float(self._spline_y(s, 2))
            f = ex * d1x + ey * d1y
            fp = d1x * d1x + d1y * d1y + ex * d2x + ey * d2y
            if fp <= 0.0:
                return None
            step = f / fp
            s -= step
            if not -1.0 <= s <= self.length + 1.0:
                return None
            if abs(step) < NEWTON_TOL:
                return s
        return None

    def _grid_search(self, X: float, Y: float, lo: float, hi: float) -> float:
        n = max(int(math.ceil((hi - lo) / (0.1 * self.ds))), 1) + 1
        grid = np.linspace(lo, hi, n)
        dist2 = (self._spline_x(grid) - X) ** 2 + (self._spline_y(grid) - Y) ** 2
        return float(grid[int(np.argmin(dist2))])

    def closest_s(self, X: float, Y: float, s_hint: float | None = None) -> float:
        if s_hint is not None:
            s = self._newton(X, Y, min(max(s_hint, 0.0), self.length))
            if s is not None and abs(s - s_hint) <= FALLBACK_WINDOW:
                return s
            lo, hi = max(s_hint - FALLBACK_WINDOW, 0.0), min(s_hint + FALLBACK_WINDOW, self.length)
        else:
            lo, hi = 0.0, self.length
        seed = self._grid_search(X, Y, lo, hi)
        s = self._newton(X, Y, seed)
        return seed if s is None else s

    def project(self, pose: GlobalPose, beta: float = 0.0, s_hint: float | None = None) -> FrenetState:
        """Frenet coordinates of a pose; ``beta`` turns body yaw into velocity heading."""
        X, Y = pose.X, pose.Y
        s = self.closest_s(X, Y, s_hint)
        if s < -S_TOL or s > self.length + S_TOL:
            raise ProjectionLost(f"projection s={s:.3f} left [0, {self.length:.3f}]")
        s = min(max(s, 0.0), self.length)
        px, py = self._point(s)
        tx, ty = self._tangent(s)
        along = (X - px) * tx + (Y - py) * ty
        if (s == 0.0 and along < -S_TOL) or (s == self.length and along > S_TOL):
            raise ProjectionLost(f"pose lies {abs(along):.3f} m beyond the path end")
        cross = (Y - py) * tx - (X - px) * ty
        d = math.copysign(math.hypot(X - px, Y - py), cross)
        kmax = self.max_abs_curvature
        if kmax > 0 and abs(d) > 0.5 / kmax:
            raise ProjectionLost(f"lateral offset {d:.3f} m beyond 0.5/max|kappa|")
        heading = wrap_angle(np.interp(s, self.s, self.heading_unwrapped))
        return FrenetState(s, d, wrap_angle(pose.psi + beta - heading))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["s", "X", "Y", "heading", "curvature", "heading_ref"])
            for row in zip(self.s, self.X, self.Y, self.heading, self.curvature, self.heading_ref):
                w.writerow([repr(float(v)) for v in row])


# construction


def path_from_profiles(curvature: Callable, heading_ref: Callable, length: float,
                       ds: float = DEFAULT_DS, start=(0.0, 0.0, 0.0)) -> ReferencePath:
    """Integrate an analytic curvature profile into a sampled path.

    Heading and position are integrated on a grid ten times finer than the
    output spacing, then subsampled.
    """
    if length <= 0 or ds <= 0:
        raise DegeneratePath("length and ds must be positive")
    n = max(int(round(length / ds)), 1)
    fine = np.linspace(0.0, n * ds, 10 * n + 1)
    kappa = np.asarray(curvature(fine), dtype=float) * np.ones_like(fine)
    psi = start[2] + cumulative_trapezoid(kappa, fine, initial=0.0)
    x = start[0] + cumulative_trapezoid(np.cos(psi), fine, initial=0.0)
    y = start[1] + cumulative_trapezoid(np.sin(psi), fine, initial=0.0)
    idx = slice(None, None, 10)
    s = fine[idx]
    ref = np.asarray(heading_ref(s), dtype=float) * np.ones_like(s)
    return ReferencePath(s, x[idx], y[idx], psi[idx], kappa[idx], ref)


def path_from_waypoints(points: Sequence, ds: float = DEFAULT_DS,
                        heading_ref: Callable | None = None) -> ReferencePath:
    """Resample a waypoint polyline through a chord-length cubic spline."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
        raise DegeneratePath("need >= 2 waypoints of shape (n, 2)")
    chord = np.hypot(*np.diff(pts, axis=0).T)
    if np.any(chord < 1e-9):
        raise DegeneratePath("duplicate consecutive waypoints")
    u = np.concatenate([[0.0], np.cumsum(chord)])
    bc = "natural" if len(pts) > 2 else "not-a-knot"
    sx, sy = CubicSpline(u, pts[:, 0], bc_type=bc), CubicSpline(u, pts[:, 1], bc_type=bc)
    fine = np.linspace(0.0, u[-1], 50 * len(u) + int(u[-1] / ds) * 10 + 1)
    speed = np.hypot(sx(fine, 1), sy(fine, 1))
    arc = cumulative_trapezoid(speed, fine, initial=0.0)
    n = max(int(round(arc[-1] / ds)), 1)
    s = np.linspace(0.0, arc[-1], n + 1)
    uu = np.interp(s, arc, fine)
    x, y = sx(uu), sy(uu)
    heading = np.unwrap(np.arctan2(sy(uu, 1), sx(uu, 1)))
    kappa = np.gradient(heading, s)
    ref = np.zeros_like(s) if heading_ref is None else np.asarray(heading_ref(s), dtype=float) * np.ones_like(s)
    return ReferencePath(s, x, y, heading, kappa, ref)


def _sinusoid_profiles(curvature_radius: float, wavelength: float, lead_in: float,
                       heading_ref_amplitude: float):
    k_amp = 1.0 / curvature_radius
    omega = 2.0 * math.pi / wavelength

    def phase(s):
        return np.maximum(np.asarray(s, dtype=float) - lead_in, 0.0) * omega

    def curvature(s):
        return k_amp * np.sin(phase(s))

    def heading_ref(s):
        phi = phase(s)
        # sin^2 window over the first half period keeps the reference C1
        window = np.where(phi < math.pi, np.sin(0.5 * phi) ** 2, 1.0)
        return heading_ref_amplitude * np.cos(phi) * window

    return curvature, heading_ref


def _keypoint_profile(keypoints):
    if not keypoints:
        return lambda s: np.zeros_like(np.asarray(s, dtype=float))
    kp = np.asarray(keypoints, dtype=float)
    return lambda s: np.interp(s, kp[:, 0], np.radians(kp[:, 1]))


def _segment_profile(segments):
    bounds, kappas = [0.0], []
    for seg in segments:
        kind = seg["type"]
        if kind == "line":
            length, k = float(seg["length"]), 0.0
        elif kind == "arc":
            radius = float(seg["radius"])  # signed, left positive
            if radius == 0:
                raise DegeneratePath("arc radius must be nonzero")
            length = float(seg["length"]) if "length" in seg else abs(radius * math.radians(seg["angle_deg"]))
            k = 1.0 / radius
        else:
            raise DegeneratePath(f"unknown segment type {kind!r}")
        if length <= 0:
            raise DegeneratePath("segment length must be positive")
        bounds.append(bounds[-1] + length)
        kappas.append(k)
    edges = np.asarray(bounds)
    ks = np.asarray(kappas)

    def curvature(s):
        i = np.clip(np.searchsorted(edges, s, side="right") - 1, 0, len(ks) - 1)
        return ks[i]

    return curvature, float(edges[-1])


def build_path(spec, ds: float | None = None) -> ReferencePath:
    """Build a path from a generator dict or a list of (x, y) waypoints.

    Generator types: ``line``, ``arc``, ``sinusoid``, ``composite`` and
    ``waypoints``. Heading references for ``line``/``arc``/``composite``/
    ``waypoints`` are keypoint lists ``[[s, deg], ...]`` under ``heading_ref``.
    """
    if not isinstance(spec, dict):
        return path_from_waypoints(spec, ds or DEFAULT_DS)
    ds = ds or float(spec.get("ds", DEFAULT_DS))
    start = tuple(spec.get("start", (0.0, 0.0, 0.0)))
    if len(start) == 3:
        start = (float(start[0]), float(start[1]), math.radians(float(start[2])))
    kind = spec.get("type")
    if kind in ("case1", "case3"):
        return build_path({**PRESETS[kind], **{k: v for k, v in spec.items() if k != "type"}}, ds)
    ref = _keypoint_profile(spec.get("heading_ref"))
    if kind == "line":
        return path_from_profiles(lambda s: 0.0, ref, float(spec["length"]), ds, start)
    if kind == "arc":
        radius = float(spec["radius"])
        length = float(spec["length"]) if "length" in spec else abs(radius * math.radians(spec.get("angle_deg", 360.0)))
        return path_from_profiles(lambda s: 1.0 / radius, ref, length, ds, start)
    if kind == "sinusoid":
        curvature, heading_ref = _sinusoid_profiles(
            float(spec.get("curvature_radius", 22.0)), float(spec.get("wavelength", 100.0)),
            float(spec.get("lead_in", 30.0)), math.radians(float(spec.get("heading_ref_amplitude_deg", 30.0))))
        return path_from_profiles(curvature, heading_ref, float(spec.get("length", 600.0)), ds, start)
    if kind == "composite":
        curvature, length = _segment_profile(spec["segments"])
        return path_from_profiles(curvature, ref, length, ds, start)
    if kind == "waypoints":
        return path_from_waypoints(spec["points"], ds, ref if spec.get("heading_ref") else None)
    raise DegeneratePath(f"unknown path type {kind!r}")


PRESETS = {
    "case1": {"type": "sinusoid", "length": 600.0},
    "case3": {
        "type": "composite",
        "segments": [
            {"type": "line", "length": 40.0},
            {"type": "arc", "radius": 30.0, "angle_deg": 90.0},
            {"type": "line", "length": 120.0},
        ],
        "heading_ref": [[0.0, 0.0], [90.0, 0.0], [110.0, -45.0]],
    },
}


def case1_path(ds: float = DEFAULT_DS, length: float = 600.0) -> ReferencePath:
    """Sinusoidal curvature (|R| >= 22 m) with a +-30 deg body heading reference."""
    return build_path({"type": "case1", "length": length}, ds)


def case3_path(ds: float = DEFAULT_DS) -> ReferencePath:
    """Line, left arc, then a straight run driven diagonally at -45 deg body heading."""
    return build_path({"type": "case3"}, ds)
