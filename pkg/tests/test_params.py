import math

import pytest

from awoisv import VehicleParams


def test_defaults_are_the_test_vehicle(params):
    assert params.mass == 10_000.0
    assert params.yaw_inertia == 34_823.0
    assert params.axle_x == (3.55, 1.75, -1.75, -3.55)
    assert params.track == 2.72
    assert params.cornering_stiffness == 40_000.0
    assert params.mu == 0.85


def test_wheel_layout(params):
    assert params.n_wheels == 8
    assert params.wheel_names[:3] == ["1L", "1R", "2L"]
    assert list(params.wheel_x[:4]) == [3.55, 3.55, 1.75, 1.75]
    assert list(params.wheel_y[:2]) == [1.36, -1.36]


def test_static_load_splits_weight_evenly(params):
    assert params.static_load == pytest.approx(10_000.0 * 9.81 / 8)


def test_scaled_copy_only_touches_named_fields(params):
    p = params.scaled(cornering_stiffness=0.8, mass=1.1)
    assert p.cornering_stiffness == pytest.approx(32_000.0)
    assert p.mass == pytest.approx(11_000.0)
    assert p.yaw_inertia == params.yaw_inertia
    with pytest.raises(KeyError):
        params.scaled(axle_x=2.0)


def test_dict_round_trip(params):
    assert VehicleParams.from_dict(params.to_dict()) == params


@pytest.mark.parametrize("bad", [{"mass": 0.0}, {"track": -1.0}, {"axle_x": (1.0, 2.0)}, {"mu": 2.0},
                                 {"cornering_stiffness": 0.0}])
def test_invalid_parameters_rejected(bad):
    with pytest.raises(ValueError):
        VehicleParams(**bad)


def test_unknown_field_rejected():
    with pytest.raises(ValueError):
        VehicleParams.from_dict({"wheelbase": 3.0})


def test_half_track_matches_layout(params):
    assert math.isclose(params.wheel_y[0] - params.wheel_y[1], params.track)
