"""End-to-end acceptance checks; each prints one PASS/FAIL line."""

import math
import time
from pathlib import Path

import numpy as np
import pytest

from awoisv.config import characterize_grid, load_scenario
from awoisv.kinematics import MotionMode, SteerPose, classify_mode
from awoisv.params import VehicleParams
from awoisv.sim import DisturbanceSpec, case1_scenario, run_scenario, steady_state_characterize
from awoisv.tube import MpcConfig, Variant
from awoisv.validate import run_all, run_suite

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


@pytest.fixture(scope="module")
def case1_run():
    sc = load_scenario(CONFIGS / "case1.json")
    t0 = time.perf_counter()
    res = run_scenario(sc.with_(output_dir=None))
    return res, time.perf_counter() - t0


@pytest.fixture(scope="module")
def mismatch_runs():
    sc = load_scenario(CONFIGS / "case1_mismatch.json").with_(output_dir=None)
    return {v.value: run_scenario(sc.with_(controller=sc.controller.with_variant(v))) for v in Variant}


def test_criterion_1_case1_tracking_bound(case1_run, record_criterion):
    res, wall = case1_run
    m = res.metrics
    ok = (not res.halted and res.scenario.duration == 60.0 and m.lateral_max <= 0.15
          and math.degrees(m.heading_max) <= 7.0 and wall <= 60.0)
    assert record_criterion(1, ok, f"max|d| {m.lateral_max:.4f} m (<= 0.15), max heading "
                                   f"{math.degrees(m.heading_max):.3f} deg (<= 7), wall {wall:.1f} s (<= 60)")


def test_criterion_2_variant_ordering(mismatch_runs, record_criterion):
    med = {k: r.metrics.lateral_median for k, r in mismatch_runs.items()}
    halted = [k for k, r in mismatch_runs.items() if r.halted]
    ok = not halted and med["FT_LTVMPC"] < med["LTVMPC"] and med["T_LTVMPC"] < med["LTVMPC"]
    assert record_criterion(2, ok, "median|d| " + ", ".join(f"{k} {v:.4f} m" for k, v in med.items()))


def test_criterion_3_smoothness_ordering(mismatch_runs, record_criterion):
    sig = {k: r.metrics.sigma_avg for k, r in mismatch_runs.items()}
    ok = sig["FT_LTVMPC"] < sig["T_LTVMPC"]
    assert record_criterion(3, ok, f"sigma_avg FT_LTVMPC {sig['FT_LTVMPC']:.5f} < T_LTVMPC {sig['T_LTVMPC']:.5f}")


def test_criterion_4_real_time_budget(case1_run, mismatch_runs, record_criterion):
    res, _ = case1_run
    runs = [res, *mismatch_runs.values()]
    mean = max(r.metrics.solve_time_mean for r in runs)
    worst = max(r.metrics.solve_time_max for r in runs)
    ok = mean < 0.020 and worst < 0.050 and res.scenario.controller.N == 20
    assert record_criterion(4, ok, f"mean solve {1e3 * mean:.2f} ms (< 20), max {1e3 * worst:.2f} ms (< 50), "
                                   f"over {sum(r.metrics.n_solves for r in runs)} solves")


def test_criterion_5_model_equivalence(record_criterion):
    run_suite("model_equivalence", 1)  # compile outside the timed run
    res = run_suite("model_equivalence", 50, seed=0)
    ok = res.passed and res.worst <= 1e-6 and res.seconds < 5.0
    assert record_criterion(5, ok, f"{res.cases} runs of 10 s at 1 ms, worst {res.worst:.2e} (<= 1e-6), "
                                   f"{res.seconds:.2f} s (< 5)")


def test_criterion_6_steady_state(record_criterion):
    poses, speeds, max_time = characterize_grid(None)
    table = steady_state_characterize(poses, speeds, max_time=max_time)
    problems = []
    for theta, beta_r in table.poses():
        R = table.radii(theta, beta_r)
        mode = classify_mode(SteerPose(theta, beta_r), VehicleParams())
        label = f"{mode.name} beta_R {math.degrees(beta_r):.0f}"
        # the neutral axis is beta_R = 0 in longitudinal and 90 deg in lateral steering
        neutral_axis = 0.0 if mode is MotionMode.LoSM else math.pi / 2
        if abs(beta_r - neutral_axis) < 1e-12:
            spread = np.ptp(R) / R.mean()
            if spread >= 0.03:
                problems.append(f"{label} neutral spread {spread:.3%}")
        elif np.sign(theta) == np.sign(beta_r):
            if np.any(np.diff(R) < 0):
                problems.append(f"{label} should be non-decreasing: {np.round(R, 3)}")
        elif np.any(np.diff(R) > 0):
            problems.append(f"{label} should be non-increasing: {np.round(R, 3)}")
    neutral = table.radii(*poses[2])
    ok = len(table.rows) == 50 and not problems
    lateral_neutral = table.radii(*poses[-1])
    detail = (f"{len(table.rows)} cases, LoSM beta_R = 0 spread {np.ptp(neutral) / neutral.mean():.3%} (< 3%), "
              f"LaSM beta_R = 90 spread {np.ptp(lateral_neutral) / lateral_neutral.mean():.3%}, "
              f"sign rule {'holds' if not problems else 'violated: ' + '; '.join(problems)}")
    assert record_criterion(6, ok, detail)


def test_criterion_7_invariant_suites(record_criterion):
    t0 = time.perf_counter()
    results = run_all(cases=1000, seed=0, equivalence_cases=0)
    total = time.perf_counter() - t0
    for r in results:
        print("  " + r.line())
    ok = all(r.passed and r.cases >= 1000 for r in results) and len(results) == 9 and total < 120.0
    failed = [r.name for r in results if not r.passed]
    assert record_criterion(7, ok, f"{len(results)} suites x 1000 cases in {total:.1f} s (< 120)"
                                   + (f", failed: {failed}" if failed else ""))


def test_criterion_8_zero_disturbance_collapse(record_criterion):
    base = case1_scenario(8.0, "LTVMPC", duration=20.0, controller=MpcConfig(M_e=(0.0,) * 5),
                          disturbance=DisturbanceSpec(exact_model=True))
    cols = ("X", "Y", "psi", "s", "d", "dpsi", "beta", "r", "theta_R", "beta_R")
    traj = {}
    for v in Variant:
        r = run_scenario(base.with_(controller=base.controller.with_variant(v)))
        assert not r.halted
        traj[v.value] = np.column_stack([r.trace.column(c) for c in cols] + [r.trace.wheel_angles()])
    ref = traj["LTVMPC"]
    gap = max(float(np.max(np.abs(t - ref))) for t in traj.values())
    ok = gap <= 1e-9 and all(t.shape == ref.shape for t in traj.values())
    assert record_criterion(8, ok, f"max trajectory difference across variants {gap:.1e} (<= 1e-9) over {len(ref)} steps")
