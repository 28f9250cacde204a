import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from awoisv.errors import DegenerateWheelSpeed, InvalidLoad
from awoisv.kinematics import IcrFinite, WheelSteering, wheel_angles
from awoisv.tire import fiala_force, fiala_lateral_force, slip_from_velocities, tire_slip_angles

FZ = 10_000.0 * 9.81 / 8
# mpmath evaluations of the brush polynomial at Fx = 0
FY_AT_005 = -1876.268256787153
FY_AT_02 = -6187.5655961173725
ALPHA_SL = 0.6635037103876864
FY_MAX = 10423.125


def test_frozen_values(params):
    s = fiala_lateral_force(0.05, FZ, 0.0, params)
    assert s.fy == pytest.approx(FY_AT_005, rel=1e-12)
    assert s.fy_max == pytest.approx(FY_MAX, rel=1e-14)
    assert s.alpha_sl == pytest.approx(ALPHA_SL, rel=1e-12)
    assert fiala_lateral_force(0.2, FZ, 0.0, params).fy == pytest.approx(FY_AT_02, rel=1e-12)


def test_zero_slip_zero_force(params):
    s = fiala_lateral_force(0.0, FZ, 0.0, params)
    assert s.fy == 0.0
    assert s.effective_stiffness == -params.cornering_stiffness


def test_beyond_sliding_is_saturated(params):
    s = fiala_lateral_force(0.0, FZ, 0.0, params)
    assert fiala_lateral_force(s.alpha_sl + 0.1, FZ, 0.0, params).fy == -s.fy_max
    assert fiala_lateral_force(-s.alpha_sl - 0.1, FZ, 0.0, params).fy == s.fy_max


def test_initial_slope_is_cornering_stiffness(params):
    h = 1e-7
    slope = (fiala_lateral_force(h, FZ, 0.0, params).fy - fiala_lateral_force(-h, FZ, 0.0, params).fy) / (2 * h)
    assert slope == pytest.approx(-params.cornering_stiffness, rel=1e-6)


def test_longitudinal_force_derates_limit(params):
    fx = 5000.0
    s = fiala_lateral_force(0.1, FZ, fx, params)
    assert s.fy_max == pytest.approx(math.sqrt((params.mu * FZ) ** 2 - fx ** 2))


def test_excess_longitudinal_force_clamped_with_warning(params):
    with pytest.warns(RuntimeWarning):
        s = fiala_lateral_force(0.1, FZ, 2 * params.mu * FZ, params)
    assert s.fy_max == 0.0 and s.fy == 0.0


@pytest.mark.parametrize("fz", [0.0, -1.0])
def test_bad_load(params, fz):
    with pytest.raises(InvalidLoad):
        fiala_lateral_force(0.1, fz, 0.0, params)


@given(st.floats(-1.5, 1.5), st.floats(0.0, 0.9))
def test_fiala_properties(params, alpha, fx_frac):
    fx = fx_frac * params.mu * FZ
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        a = fiala_lateral_force(alpha, FZ, fx, params)
        b = fiala_lateral_force(-alpha, FZ, fx, params)
    assert b.fy == -a.fy
    assert abs(a.fy) <= a.fy_max * (1 + 1e-12)


@given(st.floats(0.0, 0.9))
def test_continuous_at_sliding_angle(params, fx_frac):
    fy_max = math.sqrt(1 - fx_frac ** 2) * params.mu * FZ
    a_sl = math.atan(3 * fy_max / params.cornering_stiffness)
    left = float(fiala_force(a_sl * (1 - 1e-9), fy_max, params.cornering_stiffness))
    assert abs(left + fy_max) <= 1e-6 * fy_max


def test_monotone_up_to_sliding(params):
    s = fiala_lateral_force(0.0, FZ, 0.0, params)
    alpha = np.linspace(0, s.alpha_sl, 2001)
    fy = fiala_force(alpha, s.fy_max, params.cornering_stiffness)
    assert np.all(np.diff(fy) <= 1e-9)


def test_straight_rolling_no_slip(params):
    alpha = tire_slip_angles((5.0, 0.0, 0.0), WheelSteering(np.zeros(8)), params)
    assert np.all(alpha == 0.0)


def test_side_velocity_ratio(params):
    alpha = tire_slip_angles((5.0, 0.5, 0.0), WheelSteering(np.zeros(8)), params)
    np.testing.assert_allclose(alpha, 0.5 / 5.0, rtol=1e-15)


@pytest.mark.parametrize("b0,c0", [(0.0, 10.0), (2.0, -15.0), (-1.0, 0.5), (7.5, 13.0)])
def test_pure_rolling_about_icr(params, b0, c0):
    omega = 0.3
    wheels = wheel_angles(IcrFinite(b0, c0), params)
    alpha = tire_slip_angles((omega * c0, -omega * b0, omega), wheels, params)
    assert np.max(np.abs(alpha)) < 1e-12


def test_backward_rolling_uses_speed_magnitude():
    assert slip_from_velocities(np.array([-5.0]), np.array([0.5]))[0] == pytest.approx(0.1)


def test_degenerate_wheel_speed(params):
    assert np.all(tire_slip_angles((0.0, 0.0, 0.0), WheelSteering(np.zeros(8)), params) == 0.0)
    with pytest.raises(DegenerateWheelSpeed):
        tire_slip_angles((0.0, 0.0, 0.0), WheelSteering(np.zeros(8)), params, strict=True)
