"""Tube-based LTV MPC path tracking for all-wheel omnidirectional independent steering vehicles."""

from .dynamics import Plant, PlantState
from .kinematics import MotionMode, SteerPose, classify_mode, wheel_angles, wheel_angles_from_pose
from .params import VehicleParams
from .path import ReferencePath, build_path, case1_path, case3_path
from .qp import DenseAdmmSolver, QpProblem, QpSettings, QpStatus
from .sim import (DisturbanceSpec, RunMetrics, Scenario, SpeedProfile, run_scenario, sliding_std,
                  steady_state_characterize, sweep)
from .tube import MpcConfig, TubeMpcController, Variant

__all__ = [
    "DenseAdmmSolver", "DisturbanceSpec", "MotionMode", "MpcConfig", "Plant", "PlantState", "QpProblem",
    "QpSettings", "QpStatus", "ReferencePath", "RunMetrics", "Scenario", "SpeedProfile", "SteerPose",
    "TubeMpcController", "VehicleParams", "Variant", "build_path", "case1_path", "case3_path",
    "classify_mode", "run_scenario", "sliding_std", "steady_state_characterize", "sweep", "wheel_angles",
    "wheel_angles_from_pose",
]
__version__ = "0.1.0"
