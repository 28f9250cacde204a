"""Closed-loop scenario runner, sweeps, steady-state characterization and metrics."""

from __future__ import annotations

import csv
import json
import math
import os
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .dynamics import SPEED_GAIN, Plant, PlantState, derivative_vbr, speed_regulator
from .errors import AwoisvError, ControllerHalt, NoSteadyState, WindowTooLarge
from .kinematics import SteerPose, classify_mode, wheel_angles_from_pose
from .params import VehicleParams
from .path import ReferencePath, build_path
from .predict import BETA, D, DPSI, N_X, R, S
from .tube import MpcConfig, TubeMpcController, Variant

DEFAULT_WINDOW = 25  # samples, 0.5 s at the control rate
MAX_SPEED = 15.0


@dataclass(frozen=True)
class SpeedProfile:
    """Piecewise-linear v_ref(t), held constant outside the knots."""

    knots: tuple = ((0.0, 5.0),)

    def __post_init__(self):
        knots = tuple((float(t), float(v)) for t, v in self.knots)
        if not knots:
            raise ValueError("speed profile needs at least one knot")
        ts = [t for t, _ in knots]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("speed knots must have increasing times")
        if any(not 0.0 <= v <= MAX_SPEED for _, v in knots):
            raise ValueError(f"speeds must lie in [0, {MAX_SPEED}] m/s")
        object.__setattr__(self, "knots", knots)

    @classmethod
    def constant(cls, v: float) -> "SpeedProfile":
        return cls(((0.0, v),))

    def __call__(self, t: float) -> float:
        ts, vs = zip(*self.knots)
        return float(np.interp(t, ts, vs))


@dataclass(frozen=True)
class DisturbanceSpec:
    """Seeded noise and plant mismatch.

    Process noise is added to the sideslip and yaw-rate derivatives, drawn
    once per control period and held. Measurement noise is added to the
    Frenet state seen by the controller. Both are Gaussian and clipped to the
    given bounds (default three standard deviations).
    """

    seed: int = 0
    process_std: tuple = (0.0, 0.0)  # rad/s^2 on (beta, r)
    process_bound: tuple | None = None
    measurement_std: tuple = (0.0,) * N_X
    measurement_bound: tuple | None = None
    plant_scale: tuple = ()  # ((field, factor), ...) applied to the plant vehicle only
    exact_model: bool = False  # replace the plant by the controller's own LTV model

    def __post_init__(self):
        object.__setattr__(self, "process_std", tuple(float(v) for v in self.process_std))
        object.__setattr__(self, "measurement_std", tuple(float(v) for v in self.measurement_std))
        if isinstance(self.plant_scale, dict):
            object.__setattr__(self, "plant_scale", tuple(sorted(self.plant_scale.items())))
        if len(self.process_std) != 2 or len(self.measurement_std) != N_X:
            raise ValueError("process_std needs 2 entries and measurement_std 5")

    @property
    def process_limit(self) -> np.ndarray:
        if self.process_bound is None:
            return 3.0 * np.asarray(self.process_std)
        return np.asarray(self.process_bound, dtype=float)

    @property
    def measurement_limit(self) -> np.ndarray:
        if self.measurement_bound is None:
            return 3.0 * np.asarray(self.measurement_std)
        return np.asarray(self.measurement_bound, dtype=float)

    @property
    def is_zero(self) -> bool:
        return not any(self.process_std) and not any(self.measurement_std) and not self.plant_scale


@dataclass(frozen=True)
class Scenario:
    name: str = "scenario"
    vehicle: VehicleParams = field(default_factory=VehicleParams)
    path: dict = field(default_factory=lambda: {"type": "sinusoid"})
    speed: SpeedProfile = field(default_factory=SpeedProfile)
    controller: MpcConfig = field(default_factory=MpcConfig)
    disturbance: DisturbanceSpec = field(default_factory=DisturbanceSpec)
    duration: float = 60.0
    plant_dt: float = 1e-3
    sigma_window: int = DEFAULT_WINDOW
    output_dir: str | None = None

    def __post_init__(self):
        if self.duration <= 0:
            raise ValueError("duration must be positive")
        ticks = self.controller.T_control / self.plant_dt
        if abs(ticks - round(ticks)) > 1e-9:
            raise ValueError("T_control must be a multiple of the plant step")

    def with_(self, **changes) -> "Scenario":
        return replace(self, **changes)

    def plant_params(self) -> VehicleParams:
        return self.vehicle.scaled(**dict(self.disturbance.plant_scale)) if self.disturbance.plant_scale else self.vehicle


BASE_COLUMNS = ["t", "X", "Y", "psi", "v", "beta", "r", "s", "d", "dpsi", "theta_R", "beta_R"]
TAIL_COLUMNS = ["solve_time", "qp_iters", "qp_status"]
EXTRA_COLUMNS = ["heading_ref", "heading_err", "clipped"]
STRING_COLUMNS = ("qp_status", "variant")


def trace_columns(params: VehicleParams) -> list:
    wheels = [f"delta_{w}" for w in params.wheel_names]
    ehat = [f"ehat{i}" for i in range(N_X)]
    bound = [f"tube{i}" for i in range(N_X)]
    return BASE_COLUMNS + wheels + ehat + TAIL_COLUMNS + EXTRA_COLUMNS + bound + ["variant"]


@dataclass
class Trace:
    columns: list
    rows: list

    def column(self, name: str) -> np.ndarray:
        i = self.columns.index(name)
        if name in STRING_COLUMNS:
            return np.array([r[i] for r in self.rows], dtype=object)
        return np.array([r[i] for r in self.rows], dtype=float)

    def wheel_angles(self) -> np.ndarray:
        idx = [i for i, c in enumerate(self.columns) if c.startswith("delta_")]
        return np.array([[r[i] for i in idx] for r in self.rows], dtype=float)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.columns)
            for row in self.rows:
                w.writerow([v if isinstance(v, str) else repr(float(v)) for v in row])

    @classmethod
    def read_csv(cls, path) -> "Trace":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            columns = next(reader)
            text = {columns.index(c) for c in STRING_COLUMNS if c in columns}
            rows = [[v if i in text else float(v) for i, v in enumerate(r)] for r in reader]
        return cls(columns, rows)


def sliding_std(signal, window: int):
    """Windowed standard deviation per column and its average over columns.

    Each window of ``window`` consecutive samples contributes its population
    variance; the result is the square root of the mean variance.
    """
    x = np.asarray(signal, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if window < 2:
        raise ValueError("window must be >= 2")
    n = x.shape[0]
    if n < window:
        raise WindowTooLarge(f"window {window} exceeds {n} samples")
    windows = np.lib.stride_tricks.sliding_window_view(x, window, axis=0)  # (n-W+1, cols, W)
    var = np.mean((windows - windows.mean(axis=-1, keepdims=True)) ** 2, axis=-1)
    sigma = np.sqrt(np.mean(var, axis=0))
    return sigma, float(np.mean(sigma))


@dataclass
class RunMetrics:
    lateral_max: float
    lateral_median: float
    heading_max: float
    heading_median: float
    sigma_mov: list
    sigma_avg: float
    solve_time_mean: float
    solve_time_max: float
    iterations_mean: float
    iterations_max: int
    n_solves: int
    beta_violations: int
    yaw_rate_violations: int
    clipped_inputs: int
    non_optimal_solves: int
    n_steps: int

    @classmethod
    def from_trace(cls, trace: Trace, window: int = DEFAULT_WINDOW, beta_max: float = math.radians(10.0),
                   r_max: float = 0.3) -> "RunMetrics":
        d = np.abs(trace.column("d"))
        h = np.abs(trace.column("heading_err"))
        sigma, avg = sliding_std(trace.wheel_angles(), window)
        solve = trace.column("solve_time")
        solved = solve > 0
        iters = trace.column("qp_iters")[solved]
        status = trace.column("qp_status")[solved]
        beta_rel = np.abs(trace.column("beta") - trace.column("beta_R"))
        return cls(
            lateral_max=float(d.max()),
            lateral_median=float(np.median(d)),
            heading_max=float(h.max()),
            heading_median=float(np.median(h)),
            sigma_mov=[float(s) for s in sigma],
            sigma_avg=avg,
            solve_time_mean=float(solve[solved].mean()) if solved.any() else 0.0,
            solve_time_max=float(solve[solved].max()) if solved.any() else 0.0,
            iterations_mean=float(iters.mean()) if solved.any() else 0.0,
            iterations_max=int(iters.max()) if solved.any() else 0,
            n_solves=int(solved.sum()),
            beta_violations=int(np.sum(beta_rel > beta_max + 1e-9)),
            yaw_rate_violations=int(np.sum(np.abs(trace.column("r")) > r_max + 1e-9)),
            clipped_inputs=int(trace.column("clipped").sum()),
            non_optimal_solves=int(np.sum(status != "Optimal")),
            n_steps=len(trace.rows),
        )

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class RunResult:
    scenario: Scenario
    trace: Trace
    metrics: RunMetrics | None
    halted: bool = False
    message: str = ""
    wall_time: float = 0.0
    files: dict = field(default_factory=dict)


class _LtvPlant:
    """Surrogate plant stepping the controller's own control-rate LTV model."""

    def __init__(self, x0):
        self.x = np.array(x0, dtype=float)

    def advance(self, controller: TubeMpcController, u):
        A, B, c = controller.nominal_step
        self.x = A @ self.x + B @ u + c


def _measure(path: ReferencePath, st: PlantState, s_hint):
    fr = path.project(st.pose, st.beta, s_hint)
    return np.array([fr.s, fr.d, fr.heading_error, st.beta, st.r])


def run_scenario(sc: Scenario, out_dir=None, seed: int | None = None, raise_on_halt: bool = False) -> RunResult:
    """Simulate plant and controller; trace rows are logged at the control rate.

    A controller or path error ends the run early. The partial trace is still
    written; with ``raise_on_halt`` a ControllerHalt carrying the result is
    raised afterwards.
    """
    t_wall = time.perf_counter()
    if seed is not None:
        sc = sc.with_(disturbance=replace(sc.disturbance, seed=seed))
    cfg = sc.controller
    path = build_path(sc.path)
    dist = sc.disturbance
    rng = np.random.default_rng(dist.seed)
    controller = TubeMpcController(cfg, sc.vehicle, path)
    pparams = sc.plant_params()
    plant = Plant(pparams, sc.plant_dt)
    n_sub = int(round(cfg.T_control / sc.plant_dt))
    v0 = sc.speed(0.0)
    start = path.sample(0.0)
    state = PlantState(start.X, start.Y, start.heading, v0, 0.0, 0.0)
    ltv = _LtvPlant([0.0, 0.0, 0.0, 0.0, 0.0]) if dist.exact_model else None
    columns = trace_columns(sc.vehicle)
    rows = []
    p_std, p_lim = np.asarray(dist.process_std), dist.process_limit
    m_std, m_lim = np.asarray(dist.measurement_std), dist.measurement_limit
    n_steps = int(round(sc.duration / cfg.T_control))
    s_hint = 0.0
    halted, message = False, ""
    for k in range(n_steps):
        t = k * cfg.T_control
        v_ref = sc.speed(t)
        try:
            if ltv is not None:
                x_true = ltv.x.copy()
                s_pos = path.sample_clamped(x_true[S])
                X, Y = path.to_frenet_xy(min(max(x_true[S], 0.0), path.length), x_true[D])
                psi = s_pos.heading + x_true[DPSI] - x_true[BETA]
                state = PlantState(X, Y, psi, v_ref, x_true[BETA], x_true[R])
            else:
                x_true = _measure(path, state, s_hint)
            s_hint = x_true[S]
            if x_true[S] > path.length - cfg.N * cfg.T_mpc * max(v_ref, 1.0):
                break
            noise = np.clip(rng.standard_normal(N_X) * m_std, -m_lim, m_lim) if m_std.any() else np.zeros(N_X)
            w = np.clip(rng.standard_normal(2) * p_std, -p_lim, p_lim) if p_std.any() else np.zeros(2)
            x_meas = x_true + noise
            sol = controller.step(x_meas, state.v if ltv is None else v_ref)
        except AwoisvError as exc:
            halted, message = True, f"{type(exc).__name__}: {exc}"
            break
        ref = float(path.heading_ref_at(x_true[S]))
        head = x_true[DPSI] - (x_true[BETA] if cfg.heading_mode == "body" else 0.0)
        rows.append([t, state.X, state.Y, state.psi, state.v, state.beta, state.r,
                     *x_true[[S, D, DPSI]], float(sol.u[0]), float(sol.u[1]), *sol.delta, *sol.e_used,
                     sol.solve_time, sol.iterations, sol.status if sol.solved else "",
                     ref, math.remainder(head - ref, 2 * math.pi), float(sol.clipped),
                     *controller.sets.bound, cfg.variant.value])
        if ltv is not None:
            ltv.advance(controller, sol.u)
        else:
            state = plant.advance(state, sol.delta, v_ref, n_sub, np.full(n_sub, w[0]), np.full(n_sub, w[1]))
    trace = Trace(columns, rows)
    metrics = None
    if len(rows) >= sc.sigma_window:
        metrics = RunMetrics.from_trace(trace, sc.sigma_window, cfg.beta_max, cfg.r_max)
    result = RunResult(sc, trace, metrics, halted, message, time.perf_counter() - t_wall)
    out_dir = out_dir or sc.output_dir
    if out_dir is not None:
        _write_run(result, Path(out_dir))
    if halted and raise_on_halt:
        exc = ControllerHalt(message)
        exc.result = result
        raise exc
    return result


def _write_run(result: RunResult, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    name = result.scenario.name
    trace_path = out / f"{name}_trace.csv"
    result.trace.write_csv(trace_path)
    summary = {
        "name": name,
        "variant": result.scenario.controller.variant.value,
        "halted": result.halted,
        "message": result.message,
        "metrics": result.metrics.to_dict() if result.metrics else None,
    }
    summary_path = out / f"{name}_metrics.json"
    summary_path.write_text(json.dumps(summary, indent=2))
    result.files = {"trace": str(trace_path), "metrics": str(summary_path)}


# sweeps


@dataclass
class SweepResult:
    axis: str
    labels: list
    results: list  # RunResult or None
    errors: dict
    reductions: dict

    def table(self) -> str:
        head = "| case | max abs d (m) | median abs d (m) | max heading (deg) | median heading (deg) | sigma_avg | mean solve (ms) |"
        lines = [head, "|" + "---|" * 7]
        for label, res in zip(self.labels, self.results):
            if res is None or res.metrics is None:
                lines.append(f"| {label} | failed: {self.errors.get(label, res.message if res else '')} ||||||")
                continue
            m = res.metrics
            lines.append(f"| {label} | {m.lateral_max:.4f} | {m.lateral_median:.4f} | {math.degrees(m.heading_max):.3f} "
                         f"| {math.degrees(m.heading_median):.3f} | {m.sigma_avg:.5f} | {1e3 * m.solve_time_mean:.2f} |")
        if self.reductions:
            lines.append("")
            for k, v in self.reductions.items():
                lines.append(f"- {k}: {v:.1f}%")
        return "\n".join(lines)


def _percent_reduction(new: float, base: float) -> float:
    return 100.0 * (1.0 - new / base) if base > 0 else math.nan


def _reductions(labels, results) -> dict:
    by = {str(l): r.metrics for l, r in zip(labels, results) if r is not None and r.metrics is not None}
    out = {}
    base = by.get(Variant.LTVMPC.value)
    for name in (Variant.T_LTVMPC.value, Variant.FT_LTVMPC.value):
        m = by.get(name)
        if base is not None and m is not None:
            out[f"{name} median lateral error reduction vs LTVMPC"] = _percent_reduction(m.lateral_median, base.lateral_median)
            out[f"{name} median heading error reduction vs LTVMPC"] = _percent_reduction(m.heading_median, base.heading_median)
    t, f = by.get(Variant.T_LTVMPC.value), by.get(Variant.FT_LTVMPC.value)
    if t is not None and f is not None:
        out["FT_LTVMPC sigma_avg reduction vs T_LTVMPC"] = _percent_reduction(f.sigma_avg, t.sigma_avg)
    return out


def _sweep_case(args):
    sc, out = args
    return run_scenario(sc, out)


def sweep(template: Scenario, axis: str, values: Sequence | None = None, out_dir=None,
          workers: int = 1) -> SweepResult:
    """Run the template over speeds or variants and compare the metrics."""
    if axis == "speed":
        values = list(values) if values is not None else [2.0, 4.0, 6.0, 8.0]
        cases = [template.with_(name=f"{template.name}_v{v:g}", speed=SpeedProfile.constant(float(v))) for v in values]
        labels = [f"{float(v):g} m/s" for v in values]
    elif axis == "variant":
        values = list(values) if values is not None else [v.value for v in Variant]
        cases = [template.with_(name=f"{template.name}_{Variant.parse(v).value}",
                                controller=template.controller.with_variant(v)) for v in values]
        labels = [Variant.parse(v).value for v in values]
    else:
        raise ValueError("axis must be 'speed' or 'variant'")
    if len(cases) < 1:
        raise ValueError("sweep needs at least one value")
    out = None if out_dir is None else Path(out_dir)
    jobs = [(c, out) for c in cases]
    results, errors = [], {}
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(workers) as ex:
            futures = [ex.submit(_sweep_case, j) for j in jobs]
            outcomes = []
            for f in futures:
                try:
                    outcomes.append(f.result())
                except Exception as exc:  # recorded, the sweep continues
                    outcomes.append(exc)
    else:
        outcomes = []
        for j in jobs:
            try:
                outcomes.append(_sweep_case(j))
            except Exception as exc:
                outcomes.append(exc)
    for label, o in zip(labels, outcomes):
        if isinstance(o, Exception):
            errors[label] = f"{type(o).__name__}: {o}"
            results.append(None)
        else:
            if o.halted:
                errors[label] = o.message
            results.append(o)
    res = SweepResult(axis, labels, results, errors, _reductions(labels, results) if axis == "variant" else {})
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        summary = {
            "axis": axis,
            "cases": [{"label": l, "halted": r.halted if r else True,
                       "metrics": r.metrics.to_dict() if r and r.metrics else None} for l, r in zip(labels, results)],
            "errors": errors,
            "reductions": res.reductions,
        }
        (out / f"{template.name}_sweep_{axis}.json").write_text(json.dumps(summary, indent=2))
        (out / f"{template.name}_sweep_{axis}.md").write_text(res.table() + "\n")
    return res


# steady-state characterization


@dataclass(frozen=True)
class SteadyStateRow:
    theta: float
    beta_r: float
    v: float
    radius: float
    beta: float
    converged: bool
    settle_time: float


@dataclass
class SteadyStateTable:
    rows: list
    neutral_tol: float = 0.01

    def radii(self, theta: float, beta_r: float) -> np.ndarray:
        sel = [r for r in self.rows if r.theta == theta and r.beta_r == beta_r]
        return np.array([r.radius for r in sorted(sel, key=lambda r: r.v)])

    def poses(self) -> list:
        seen = []
        for r in self.rows:
            if (r.theta, r.beta_r) not in seen:
                seen.append((r.theta, r.beta_r))
        return seen

    def handling(self, theta: float, beta_r: float) -> str:
        """Understeer, oversteer or neutral from the trend of R over speed."""
        R_ = self.radii(theta, beta_r)
        if np.ptp(R_) <= self.neutral_tol * np.mean(R_):
            return "neutral"
        return "understeer" if R_[-1] > R_[0] else "oversteer"

    def to_dicts(self) -> list:
        return [asdict(r) for r in self.rows]


def steady_state_characterize(poses: Sequence, speeds: Sequence, params: VehicleParams | None = None,
                              dt: float = 1e-3, max_time: float = 60.0, tol: float = 1e-6,
                              chunk: float = 1.0) -> SteadyStateTable:
    """Hold each steering pose at each target speed until the body rates settle.

    Steady state is declared when the (v, beta, r) derivative norm drops
    below ``tol``; otherwise the run stops at ``max_time`` and raises
    NoSteadyState if the yaw rate is still moving.
    """
    params = params or VehicleParams()
    plant = Plant(params, dt)
    rows = []
    n_chunk = int(round(chunk / dt))
    for theta, beta_r in poses:
        pose = SteerPose(theta, beta_r).validate(params)
        classify_mode(pose, params)
        delta = wheel_angles_from_pose(theta, beta_r, params)
        for v in speeds:
            st = PlantState(0.0, 0.0, 0.0, float(v), float(beta_r), float(v) * math.tan(theta))
            t, converged = 0.0, False
            prev_r = math.inf
            while t < max_time - 1e-9:
                last_r = st.r
                st = plant.advance(st, delta, float(v), n_chunk)
                t += chunk
                fx = speed_regulator(st, float(v), delta, params, SPEED_GAIN)
                rate = derivative_vbr(st.body, delta, fx, params)
                if float(np.linalg.norm(rate)) < tol:
                    converged = True
                    break
                prev_r = last_r
            if not converged and abs(st.r - prev_r) > 1e-4 * max(abs(st.r), 1e-3):
                raise NoSteadyState(f"pose ({theta:.4f}, {beta_r:.4f}) at {v} m/s still oscillating")
            radius = st.v / st.r if st.r != 0 else math.inf
            rows.append(SteadyStateRow(theta, beta_r, float(v), abs(radius), st.beta, converged, t))
    return SteadyStateTable(rows)


def case1_scenario(speed: float = 8.0, variant="FT_LTVMPC", **kw) -> Scenario:
    """Sinusoidal path driven at constant speed with the nominal plant."""
    return Scenario(name=kw.pop("name", f"case1_{Variant.parse(variant).value}_v{speed:g}"),
                    path={"type": "sinusoid", "length": 600.0},
                    speed=SpeedProfile.constant(speed),
                    controller=kw.pop("controller", MpcConfig()).with_variant(variant), **kw)


def output_dir_from_env(default=None):
    return os.environ.get("AWOISV_OUT", default)
