"""Scenario files: JSON validated against the bundled schema."""

from __future__ import annotations

import json
import math
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .errors import ConfigError
from .params import VehicleParams
from .sim import DisturbanceSpec, Scenario, SpeedProfile
from .tube import MpcConfig

LOSM_RADIUS = 15.0
LASM_RADIUS = 10.0
LOSM_BETAS = (-60.0, -30.0, 0.0, 30.0, 60.0)
LASM_BETAS = (-85.0, -80.0, 80.0, 85.0, 90.0)
GRID_SPEEDS = (1.0, 2.0, 3.0, 4.0, 5.0)


def load_schema() -> dict:
    text = resources.files("awoisv").joinpath("data/scenario.schema.json").read_text()
    return json.loads(text)


def validate_document(doc: dict) -> None:
    try:
        jsonschema.validate(doc, load_schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {exc.message}") from exc


def _speed(section: dict | None) -> SpeedProfile:
    if not section:
        return SpeedProfile()
    if "constant" in section:
        return SpeedProfile.constant(section["constant"])
    return SpeedProfile(tuple(tuple(k) for k in section["profile"]))


def _disturbance(section: dict | None) -> DisturbanceSpec:
    section = dict(section or {})
    for key in ("process_std", "process_bound", "measurement_std", "measurement_bound"):
        if key in section:
            section[key] = tuple(section[key])
    return DisturbanceSpec(**section)


def scenario_from_dict(doc: dict, validate: bool = True) -> Scenario:
    """Build a Scenario; any schema or value error becomes ConfigError."""
    if validate:
        validate_document(doc)
    try:
        kw = {}
        for key in ("name", "duration", "plant_dt", "sigma_window"):
            if key in doc:
                kw[key] = doc[key]
        return Scenario(
            vehicle=VehicleParams.from_dict(doc.get("vehicle", {})),
            path=doc.get("path", {"type": "case1"}),
            speed=_speed(doc.get("speed")),
            controller=MpcConfig.from_dict(doc.get("controller", {})),
            disturbance=_disturbance(doc.get("disturbance")),
            output_dir=doc.get("output", {}).get("dir"),
            **kw,
        )
    except ConfigError:
        raise
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc


def load_document(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc


def load_scenario(path) -> Scenario:
    return scenario_from_dict(load_document(path))


def pose_from_radius(radius: float, beta_deg: float) -> tuple:
    """(theta_R, beta_R) with sgn(theta_R) * R0 = cot(theta_R)."""
    return (math.copysign(math.atan(1.0 / abs(radius)), radius), math.radians(beta_deg))


def characterize_grid(section: dict | None) -> tuple:
    """Steering poses and speeds for a steady-state sweep; defaults to both 25-case grids."""
    section = section or {}
    poses = []
    for grid in section.get("grids", [] if "poses" in section else ["losm", "lasm"]):
        radius, betas = (LOSM_RADIUS, LOSM_BETAS) if grid == "losm" else (LASM_RADIUS, LASM_BETAS)
        poses += [pose_from_radius(radius, b) for b in betas]
    poses += [pose_from_radius(r, b) for r, b in section.get("poses", [])]
    speeds = tuple(section.get("speeds", GRID_SPEEDS))
    return poses, speeds, float(section.get("max_time", 60.0))


def scenario_to_dict(sc: Scenario) -> dict:
    d = sc.disturbance
    doc = {
        "name": sc.name,
        "duration": sc.duration,
        "plant_dt": sc.plant_dt,
        "sigma_window": sc.sigma_window,
        "vehicle": sc.vehicle.to_dict(),
        "path": sc.path,
        "speed": {"profile": [list(k) for k in sc.speed.knots]},
        "controller": {k: v for k, v in sc.controller.to_dict().items() if v is not None},
        "disturbance": {
            "seed": d.seed,
            "process_std": list(d.process_std),
            "measurement_std": list(d.measurement_std),
            "plant_scale": dict(d.plant_scale),
            "exact_model": d.exact_model,
        },
    }
    for key in ("process_bound", "measurement_bound"):
        if getattr(d, key) is not None:
            doc["disturbance"][key] = list(np.asarray(getattr(d, key), dtype=float))
    if sc.output_dir:
        doc["output"] = {"dir": sc.output_dir}
    return doc
