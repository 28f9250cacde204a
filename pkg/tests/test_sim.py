import json
import math

import numpy as np
import pytest

from awoisv.config import pose_from_radius
from awoisv.dynamics import Plant, PlantState
from awoisv.errors import ControllerHalt, NoSteadyState, WindowTooLarge
from awoisv.sim import (DisturbanceSpec, RunMetrics, Scenario, SpeedProfile, Trace, case1_scenario, run_scenario,
                        sliding_std, steady_state_characterize, sweep, trace_columns)
from awoisv.tube import MpcConfig

NOISY = DisturbanceSpec(seed=4, process_std=(0.3667, 0.15), process_bound=(1.1, 0.45),
                        measurement_std=(0.0, 0.002, 0.001, 0.0005, 0.0005))


def short_case(**kw):
    return case1_scenario(6.0, "FT_LTVMPC", duration=kw.pop("duration", 4.0), **kw)


@pytest.fixture(scope="module")
def noisy_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("noisy")
    return run_scenario(short_case(name="noisy", disturbance=NOISY), out), out


def test_sliding_std_examples():
    sigma, avg = sliding_std(np.full((40, 8), 0.3), 5)
    assert np.all(sigma == 0.0) and avg == 0.0
    a = 0.2
    sigma, _ = sliding_std(np.array([a, -a, a, -a]), 2)
    assert sigma[0] == pytest.approx(a, rel=1e-15)
    sigma, _ = sliding_std(np.arange(10.0), 3)
    assert sigma[0] == pytest.approx(math.sqrt(2 / 3), rel=1e-14)
    col = np.sin(np.arange(50.0))
    sigma, avg = sliding_std(np.tile(col[:, None], (1, 8)), 7)
    assert np.all(sigma == sigma[0]) and avg == pytest.approx(sigma[0], rel=1e-15)


def test_sliding_std_errors():
    with pytest.raises(WindowTooLarge):
        sliding_std(np.zeros(3), 5)
    with pytest.raises(ValueError):
        sliding_std(np.zeros(10), 1)


def test_speed_profile():
    p = SpeedProfile(((0.0, 2.0), (8.0, 8.0)))
    assert p(4.0) == 5.0 and p(20.0) == 8.0 and p(-1.0) == 2.0
    with pytest.raises(ValueError):
        SpeedProfile(((0.0, 16.0),))
    with pytest.raises(ValueError):
        SpeedProfile(((1.0, 1.0), (1.0, 2.0)))


def test_scenario_validation():
    with pytest.raises(ValueError):
        Scenario(duration=0.0)
    with pytest.raises(ValueError):
        Scenario(plant_dt=0.003)
    with pytest.raises(ValueError):
        DisturbanceSpec(process_std=(1.0,))


def test_plant_scale_only_touches_plant():
    sc = Scenario(disturbance=DisturbanceSpec(plant_scale={"cornering_stiffness": 0.8}))
    assert sc.plant_params().cornering_stiffness == pytest.approx(32_000.0)
    assert sc.vehicle.cornering_stiffness == 40_000.0


def test_straight_line_exact_tracking():
    sc = Scenario(name="line", path={"type": "line", "length": 200.0}, speed=SpeedProfile.constant(5.0), duration=10.0)
    res = run_scenario(sc)
    assert not res.halted
    assert res.metrics.lateral_median < 1e-3
    assert res.metrics.lateral_max < 1e-3


def test_trace_layout(noisy_run, params):
    res, out = noisy_run
    cols = trace_columns(params)
    assert cols[:12] == ["t", "X", "Y", "psi", "v", "beta", "r", "s", "d", "dpsi", "theta_R", "beta_R"]
    assert cols[12:20] == [f"delta_{w}" for w in params.wheel_names]
    assert cols[20:28] == ["ehat0", "ehat1", "ehat2", "ehat3", "ehat4", "solve_time", "qp_iters", "qp_status"]
    assert res.trace.columns == cols
    assert len(res.trace.rows) == 200
    assert set(res.files) == {"trace", "metrics"}


def _without_timing(path):
    t = Trace.read_csv(path)
    i = t.columns.index("solve_time")
    return [r[:i] + r[i + 1:] for r in t.rows]


def test_same_seed_same_trace(noisy_run, tmp_path):
    res, out = noisy_run
    again = run_scenario(short_case(name="noisy", disturbance=NOISY), tmp_path)
    # the solve-time column is measured wall time; every other byte must match
    assert _without_timing(res.files["trace"]) == _without_timing(again.files["trace"])
    a = (out / "noisy_trace.csv").read_text().splitlines()
    b = (tmp_path / "noisy_trace.csv").read_text().splitlines()
    i = a[0].split(",").index("solve_time")

    def drop_timing(lines):
        return [[c for j, c in enumerate(line.split(",")) if j != i] for line in lines]

    assert drop_timing(a) == drop_timing(b)


def test_other_seed_differs(noisy_run):
    res, _ = noisy_run
    other = run_scenario(short_case(name="noisy", disturbance=NOISY), seed=5)
    assert not np.array_equal(res.trace.column("d"), other.trace.column("d"))


def test_metrics_recomputed_from_csv(noisy_run):
    res, out = noisy_run
    stored = json.loads((out / "noisy_metrics.json").read_text())["metrics"]
    fresh = RunMetrics.from_trace(Trace.read_csv(out / "noisy_trace.csv"), 25).to_dict()
    assert fresh == stored

    # and from first principles on the CSV columns
    t = Trace.read_csv(out / "noisy_trace.csv")
    d = np.abs(t.column("d"))
    assert stored["lateral_max"] == float(d.max())
    assert stored["lateral_median"] == float(np.median(d))
    delta = t.wheel_angles()
    W = 25
    var = np.array([[np.var(delta[k:k + W, w]) for w in range(8)] for k in range(len(delta) - W + 1)])
    sig = np.sqrt(var.mean(axis=0))
    np.testing.assert_allclose(stored["sigma_mov"], sig, rtol=1e-12)


def test_open_loop_replay_matches(tmp_path, params):
    res = run_scenario(short_case(name="replay"), tmp_path)
    t = Trace.read_csv(tmp_path / "replay_trace.csv")
    state_cols = ["X", "Y", "psi", "v", "beta", "r"]
    states = np.column_stack([t.column(c) for c in state_cols])
    delta = t.wheel_angles()
    plant = Plant(params, 1e-3)
    st = PlantState(*states[0])
    worst = 0.0
    for k in range(len(states) - 1):
        st = plant.advance(st, delta[k], 6.0, 20)
        worst = max(worst, float(np.max(np.abs(np.array(st) - states[k + 1]))))
    assert worst <= 1e-9
    assert not res.halted


def test_single_entry_sweep_equals_run(tmp_path):
    sc = short_case(name="one", duration=2.0)
    res = sweep(sc, "speed", [6.0], tmp_path)
    direct = run_scenario(sc.with_(name="one_v6"))
    i = direct.trace.columns.index("solve_time")
    assert [r[:i] + r[i + 1:] for r in res.results[0].trace.rows] == [r[:i] + r[i + 1:] for r in direct.trace.rows]
    assert (tmp_path / "one_sweep_speed.json").exists() and (tmp_path / "one_sweep_speed.md").exists()


def test_variant_sweep_reports_reductions(tmp_path):
    res = sweep(short_case(name="vs", duration=2.0), "variant", None, tmp_path)
    assert res.labels == ["LTVMPC", "T_LTVMPC", "FT_LTVMPC"]
    assert "FT_LTVMPC sigma_avg reduction vs T_LTVMPC" in res.reductions
    assert "| LTVMPC |" in res.table()


def test_sweep_records_failures_and_continues(tmp_path):
    # the fixed tube gain is unstable at 1 m/s, so that entry halts
    res = sweep(case1_scenario(6.0, "T_LTVMPC", name="fail", duration=1.0), "speed", [1.0, 6.0], tmp_path)
    assert "1 m/s" in res.errors and "UnstableClosedLoop" in res.errors["1 m/s"]
    assert res.results[1] is not None and not res.results[1].halted


def test_halt_flushes_partial_trace(tmp_path):
    sc = case1_scenario(1.0, "T_LTVMPC", name="halt", duration=2.0)
    with pytest.raises(ControllerHalt) as info:
        run_scenario(sc, tmp_path, raise_on_halt=True)
    assert info.value.result.halted
    assert (tmp_path / "halt_trace.csv").exists()
    summary = json.loads((tmp_path / "halt_metrics.json").read_text())
    assert summary["halted"] and "UnstableClosedLoop" in summary["message"]


def test_exact_model_variants_collapse():
    base = case1_scenario(8.0, "LTVMPC", duration=3.0,
                          controller=MpcConfig(M_e=(0.0,) * 5), disturbance=DisturbanceSpec(exact_model=True))
    traces = []
    for v in ("LTVMPC", "T_LTVMPC", "FT_LTVMPC"):
        r = run_scenario(base.with_(controller=base.controller.with_variant(v)))
        traces.append(np.column_stack([r.trace.column(c) for c in ("s", "d", "dpsi", "beta", "r", "theta_R", "beta_R")]))
    assert np.max(np.abs(traces[0] - traces[1])) <= 1e-9
    assert np.max(np.abs(traces[0] - traces[2])) <= 1e-9


def test_steady_state_kinematic_limit(params):
    poses = [pose_from_radius(15.0, 30.0), pose_from_radius(10.0, 85.0)]
    table = steady_state_characterize(poses, [0.2], params, max_time=30.0)
    for (theta, beta_r), R in zip(poses, (15.0, 10.0)):
        assert table.radii(theta, beta_r)[0] == pytest.approx(R, rel=0.02)


def test_steady_state_without_time_raises(params):
    with pytest.raises(NoSteadyState):
        steady_state_characterize([pose_from_radius(15.0, 0.0)], [3.0], params, max_time=0.0)


def test_handling_classification(params):
    theta, _ = pose_from_radius(15.0, 0.0)
    poses = [(theta, 0.0), (theta, math.radians(60)), (theta, math.radians(-60))]
    table = steady_state_characterize(poses, [1.0, 5.0], params)
    assert [table.handling(*p) for p in poses] == ["neutral", "understeer", "oversteer"]
