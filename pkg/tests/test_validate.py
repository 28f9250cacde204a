import numpy as np
import pytest

from awoisv import validate
from awoisv.validate import SUITES, SuiteResult, run_all, run_suite


@pytest.mark.parametrize("name", list(SUITES))
def test_suite_passes(name):
    res = run_suite(name, 60, seed=3)
    assert res.passed, res.line()


def test_model_equivalence_suite():
    res = run_suite("model_equivalence", 5, seed=1)
    assert res.passed and res.worst < 1e-6


def test_run_all_layout():
    results = run_all(cases=10, equivalence_cases=0)
    assert [r.name for r in results] == list(SUITES)


def test_line_format():
    assert SuiteResult("x", 10, 0, 1e-13, 0.5).line().startswith("PASS x")
    assert SuiteResult("x", 10, 2, 1.0, 0.5).line().startswith("FAIL x")
    assert not SuiteResult("x", 0, 0, 0.0, 0.0).passed


def test_suites_catch_a_broken_tire(monkeypatch):
    real = validate.fiala_force
    monkeypatch.setattr(validate, "fiala_force", lambda a, f, c: real(np.abs(a), f, c))
    assert not run_suite("fiala_properties", 50).passed


def test_suites_catch_broken_wheel_angles(monkeypatch):
    real = validate.wheel_angles

    def skewed(icr, params, *a, **k):
        out = real(icr, params, *a, **k)
        return type(out)(out.delta + 1e-3)

    monkeypatch.setattr(validate, "wheel_angles", skewed)
    assert not run_suite("icr_perpendicularity", 50).passed
