import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from awoisv.dynamics import (BodyStateVBR, BodyStateXY, GlobalPose, Plant, PlantState, derivative_vbr,
                             derivative_vxvyr, integrate_plant, integrate_vbr, integrate_xy, simulate_body,
                             speed_regulator, wrap_angle)
from awoisv.errors import LowSpeedSingularity
from awoisv.kinematics import SteerPose, WheelSteering

ZERO = WheelSteering(np.zeros(8))


def vbr_as_xy(state, rates):
    v, beta, r = state
    dv, dbeta, dr = rates
    return (dv * math.cos(beta) - v * math.sin(beta) * dbeta,
            dv * math.sin(beta) + v * math.cos(beta) * dbeta, dr)


def test_straight_equilibrium(params):
    assert derivative_vxvyr((5.0, 0.0, 0.0), ZERO, 0.0, params) == (0.0, 0.0, 0.0)
    assert derivative_vbr((5.0, 0.0, 0.0), ZERO, 0.0, params) == (0.0, 0.0, 0.0)


def test_diagonal_drive_equal_accelerations(params):
    pose = SteerPose(0.0, math.pi / 4)
    d = derivative_vxvyr((0.0, 0.0, 0.0), pose, 1000.0, params)
    assert d.vx == pytest.approx(d.vy, rel=1e-12)
    assert d.r == pytest.approx(0.0, abs=1e-12)


def test_low_speed_singularity(params):
    with pytest.raises(LowSpeedSingularity):
        derivative_vbr((0.05, 0.0, 0.0), ZERO, 0.0, params)


def test_vbr_xy_conversion_round_trip():
    s = BodyStateVBR(4.0, 0.3, 0.1)
    back = BodyStateVBR.from_xy(s.to_xy())
    assert back == pytest.approx(s)


def test_wrap_angle_half_open():
    assert wrap_angle(math.pi) == pytest.approx(math.pi)
    assert wrap_angle(-math.pi) == pytest.approx(math.pi)
    assert wrap_angle(3 * math.pi / 2) == pytest.approx(-math.pi / 2)
    assert GlobalPose(0, 0, 3.0).course(0.5) == pytest.approx(3.5 - 2 * math.pi)


@given(
    st.floats(0.5, 15.0), st.floats(-0.5, 0.5), st.floats(-0.5, 0.5),
    st.floats(-0.6, 0.6), st.floats(-math.pi / 2 + 0.01, math.pi / 2), st.floats(-2000.0, 2000.0),
)
def test_vbr_matches_xy(params, v, beta, r, theta, beta_r, fx):
    pose = SteerPose(theta, beta_r)
    state = BodyStateVBR(v, beta, r)
    xy = derivative_vxvyr(state.to_xy(), pose, fx, params)
    conv = vbr_as_xy(state, derivative_vbr(state, pose, fx, params))
    scale = 1.0 + max(abs(a) for a in xy)
    assert max(abs(a - b) for a, b in zip(xy, conv)) <= 1e-9 * scale


def test_zero_derivative_state_unchanged(params):
    s = PlantState(1.0, 2.0, 0.3, 0.0, 0.0, 0.0)
    out = integrate_plant(s, ZERO, 0.0, params, 0.01)
    np.testing.assert_allclose(np.array(out, dtype=float), np.array(s), rtol=0, atol=1e-15)


def test_straight_ten_seconds(params):
    s = PlantState(0.0, 0.0, 0.0, 5.0, 0.0, 0.0)
    for _ in range(1000):
        s = integrate_plant(s, ZERO, 0.0, params, 0.01)
    assert s.X == pytest.approx(50.0, rel=1e-12)
    assert s.Y == 0.0


def test_rk4_step_halving_fourth_order(params):
    pose = SteerPose(math.atan(1 / 12), 0.3)
    s0 = PlantState(0.0, 0.0, 0.0, 6.0, 0.05, 0.1)

    def run(dt):
        s = s0
        for _ in range(int(round(1.0 / dt))):
            s = integrate_plant(s, pose, 300.0, params, dt)
        return np.array(s)

    ref = run(0.0025)
    e1 = np.max(np.abs(run(0.04) - ref))
    e2 = np.max(np.abs(run(0.02) - ref))
    assert e1 / e2 > 12.0  # ideal 16


def test_disturbance_enters_rates(params):
    s = PlantState(0.0, 0.0, 0.0, 5.0, 0.0, 0.0)
    out = integrate_plant(s, ZERO, 0.0, params, 1e-4, disturbance=(0.0, 1.0))
    assert out.r == pytest.approx(1e-4, rel=1e-3)


def test_invalid_step(params):
    with pytest.raises(ValueError):
        integrate_plant(PlantState(0, 0, 0, 1, 0, 0), ZERO, 0.0, params, 0.0)


def test_compiled_body_matches_python(params):
    pose = SteerPose(0.1, 0.2)
    x = BodyStateXY(5.0, 0.2, 0.05)
    y = x
    for _ in range(200):
        y = integrate_xy(y, pose, 200.0, params, 1e-3)
    z = simulate_body(x, pose, 200.0, params, 1e-3, 200, form="xy")
    assert np.max(np.abs(np.array(y) - np.array(z))) < 1e-12
    v = BodyStateVBR.from_xy(x)
    w = v
    for _ in range(200):
        w = integrate_vbr(w, pose, 200.0, params, 1e-3)
    assert np.max(np.abs(np.array(w) - np.array(simulate_body(v, pose, 200.0, params, 1e-3, 200)))) < 1e-12


def test_speed_regulator_pushes_towards_reference(params):
    s = PlantState(0, 0, 0, 4.0, 0.0, 0.0)
    fx = speed_regulator(s, 5.0, np.zeros(8), params)
    assert np.allclose(fx, 0.5 * params.mass / 8)
    assert np.all(speed_regulator(s, 100.0, np.zeros(8), params) <= 0.5 * params.mu * params.static_load)


def test_plant_advance_matches_python_integrator(params):
    plant = Plant(params, dt=1e-3)
    s0 = PlantState(0.0, 0.0, 0.0, 5.0, 0.0, 0.0)
    delta = np.zeros(8)
    s = plant.advance(s0, delta, 6.0, 100)
    ref = s0
    for _ in range(100):
        fx = speed_regulator(ref, 6.0, delta, params)
        ref = integrate_plant(ref, WheelSteering(delta), fx, params, 1e-3)
    assert np.max(np.abs(np.array(s) - np.array(ref))) < 1e-9


def test_plant_advance_deterministic(params):
    plant = Plant(params)
    s0 = PlantState(0.0, 0.0, 0.0, 5.0, 0.01, 0.02)
    delta = np.full(8, 0.05)
    w = np.linspace(-0.1, 0.1, 20)
    assert plant.advance(s0, delta, 5.0, 20, w, w) == plant.advance(s0, delta, 5.0, 20, w, w)
