"""Stroke planning for a drawing tool whose conical tip wears down.

The pieces chain as: reference stroke -> force/wear identification ->
batch trajectory optimization -> simulated execution on a raster canvas ->
width measurement -> refit, repeated over iterations.
"""

from .errors import (CanvasOverflow, ConfigError, DegenerateTangent, DegenerateTip, EmptyDepths, EmptyMask,
                     InfeasibleStart, InvalidTip, LengthMismatch, NoContact, NonPositiveWidth, NumericalError,
                     OutOfBounds, RankDeficient, WearplanError)
from .experiment import ExperimentConfig, run_calibration, run_comparison, run_iterations
from .force_model import (CalibrationSet, ForceLaw, ForceModelParams, SurfaceMap, fit_degradation, fit_force,
                          force, sweep_calibration)
from .kinematics import BoxConstraints, EndEffectorState, InputSample, check_feasible, restore_feasibility, step
from .planner import Plan, PlannerConfig, cost, plan_stroke, rollout
from .ref_stroke import ReferenceStroke, build_polyline_stroke, frame_at, l_stroke
from .sim_canvas import Canvas, GroundTruth, execute, read_canvas, write_canvas
from .stroke_vision import WidthProfile, error_metric, extract_contour, threshold, width_profile
from .tool_geometry import (EllipseAxes, ToolTipState, axes, degrade, deposition_width,
                            smooth_deposition_width)

__version__ = "0.1.0"

__all__ = [
    "BoxConstraints", "CalibrationSet", "Canvas", "CanvasOverflow", "ConfigError", "DegenerateTangent",
    "DegenerateTip", "EllipseAxes", "EmptyDepths", "EmptyMask", "EndEffectorState", "ExperimentConfig",
    "ForceLaw", "ForceModelParams", "GroundTruth", "InfeasibleStart", "InputSample", "InvalidTip",
    "LengthMismatch", "NoContact", "NonPositiveWidth", "NumericalError", "OutOfBounds", "Plan",
    "PlannerConfig", "RankDeficient", "ReferenceStroke", "SurfaceMap", "ToolTipState", "WearplanError",
    "WidthProfile", "axes", "build_polyline_stroke", "check_feasible", "cost", "degrade", "deposition_width",
    "error_metric", "execute", "extract_contour", "fit_degradation", "fit_force", "force", "frame_at",
    "l_stroke", "plan_stroke", "read_canvas", "restore_feasibility", "rollout", "run_calibration",
    "run_comparison", "run_iterations", "smooth_deposition_width", "step", "sweep_calibration", "threshold",
    "width_profile", "write_canvas",
]
