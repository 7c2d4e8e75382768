"""Calibrate, then iterate plan -> execute -> measure -> refit, and compare tool tilts.

All physical quantities in the JSON config are SI; angles are in degrees.
"""

from __future__ import annotations

import copy
import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CanvasOverflow, ConfigError
from .force_model import (CalibrationSet, ForceLaw, ForceModelParams, SurfaceMap, fit_degradation, fit_force,
                          force_residuals, predicted_offsets, sweep_calibration, write_calibration,
                          write_surface)
from .kinematics import BoxConstraints
from .planner import Plan, PlannerConfig, plan_stroke, write_plan
from .ref_stroke import ReferenceStroke, l_stroke, read_stroke_csv, write_stroke_csv
from .sim_canvas import Canvas, GroundTruth, execute, write_canvas, write_trace
from .stroke_vision import error_metric, threshold, width_profile, write_profile
from .tool_geometry import ToolTipState


@dataclass(frozen=True)
class TipSpec:
    gamma_deg: float = 0.0
    m: float = 5.45
    d0: float = 1e-4
    d_max: float = 1e-2

    def tip(self, kd: float = 0.0, d: float | None = None) -> ToolTipState:
        return ToolTipState.from_tilt(self.m, self.gamma_deg, self.d0 if d is None else d, kd, self.d_max)


@dataclass(frozen=True)
class ModelSpec:
    """Planner-side knowledge before any learning."""

    theta: float = -1000.0
    theta0: float = 0.05
    kd: float = 0.0
    freeze_kd: bool = False
    fit_offset: bool = True
    kd_max: float = 1.0


@dataclass(frozen=True)
class TruthSpec:
    theta: float = -1000.0
    theta0: float = 0.05
    quadratic: float = 0.0
    kd: float = 0.02
    noise_sd: float = 0.0
    surface: dict = field(default_factory=dict)


@dataclass(frozen=True)
class CalibrationSpec:
    enabled: bool = True
    depths: tuple = (5e-4, 1e-3, 1.5e-3)
    samples_per_depth: int = 100
    noise_sd: float | None = None  # None: use the ground-truth force noise


@dataclass(frozen=True)
class MeasurementSpec:
    level: int = 128
    scale: float = 1e-5
    margin: float = 3e-3
    search: float | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    stroke: dict = field(default_factory=lambda: {"kind": "l_stroke"})
    arms: dict = field(default_factory=lambda: {
        "baseline": TipSpec(gamma_deg=0.0),
        "tilted": TipSpec(gamma_deg=50.0),
    })
    model: ModelSpec = ModelSpec()
    truth: TruthSpec = TruthSpec()
    calibration: CalibrationSpec = CalibrationSpec()
    planner: dict = field(default_factory=dict)
    constraints: dict = field(default_factory=dict)
    measurement: MeasurementSpec = MeasurementSpec()
    initial_psi_deg: float = 0.0
    iterations: int = 10
    output_dir: str = "out"
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if not self.arms:
            raise ConfigError("at least one arm is required")

    @classmethod
    def from_dict(cls, raw: dict) -> ExperimentConfig:
        raw = dict(raw)
        try:
            arms = {name: TipSpec(**spec) for name, spec in raw.pop("arms", {}).items()} or None
            kwargs = {
                "model": ModelSpec(**raw.pop("model", {})),
                "truth": TruthSpec(**raw.pop("truth", {})),
                "calibration": CalibrationSpec(**_tuple_depths(raw.pop("calibration", {}))),
                "measurement": MeasurementSpec(**raw.pop("measurement", {})),
            }
            if arms:
                kwargs["arms"] = arms
            return cls(**kwargs, **raw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> ExperimentConfig:
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        return {
            "stroke": self.stroke,
            "arms": {k: vars(v) for k, v in self.arms.items()},
            "model": vars(self.model),
            "truth": vars(self.truth),
            "calibration": {**vars(self.calibration), "depths": list(self.calibration.depths)},
            "planner": self.planner,
            "constraints": self.constraints,
            "measurement": vars(self.measurement),
            "initial_psi_deg": self.initial_psi_deg,
            "iterations": self.iterations,
            "output_dir": self.output_dir,
            "seed": self.seed,
        }


def _tuple_depths(raw: dict) -> dict:
    raw = dict(raw)
    if "depths" in raw:
        raw["depths"] = tuple(raw["depths"])
    return raw


@dataclass
class IterationRecord:
    iteration: int
    arm: str
    V: float
    theta: float
    theta0: float
    kd: float
    d_start_est: float
    d_start_true: float
    force_rms_residual: float
    artifacts: dict = field(default_factory=dict)


def build_stroke(cfg: ExperimentConfig) -> ReferenceStroke:
    spec = dict(cfg.stroke)
    kind = spec.pop("kind", "l_stroke")
    if kind == "l_stroke":
        if "origin" in spec:
            spec["origin"] = tuple(spec["origin"])
        return l_stroke(**spec)
    if kind == "csv":
        return read_stroke_csv(spec["path"], spec.get("dt", 0.008))
    raise ConfigError(f"unknown stroke kind {kind!r}")


def _surface_bounds(stroke: ReferenceStroke, margin: float):
    lo = stroke.xy.min(axis=0) - margin
    hi = stroke.xy.max(axis=0) + margin
    return lo[0], lo[1], hi[0], hi[1]


def build_surface(cfg: ExperimentConfig, stroke: ReferenceStroke) -> SurfaceMap:
    spec = dict(cfg.truth.surface)
    if "heights" in spec:
        return SurfaceMap(np.array(spec["heights"]), tuple(spec.get("origin", (0.0, 0.0))),
                          spec.get("spacing", 1e-3))
    bounds = _surface_bounds(stroke, 0.02)
    return SurfaceMap.planar(spec.get("height", 0.0), spec.get("slope_x", 0.0), spec.get("slope_y", 0.0),
                             bounds, spec.get("spacing", 2e-3))


def build_truth(cfg: ExperimentConfig, surface: SurfaceMap) -> GroundTruth:
    t = cfg.truth
    return GroundTruth(ForceLaw(t.theta, t.theta0, t.quadratic), t.kd, surface, t.noise_sd, cfg.seed)


def build_constraints(cfg: ExperimentConfig, stroke: ReferenceStroke, surface: SurfaceMap) -> BoxConstraints:
    spec = cfg.constraints
    x0, y0, x1, y1 = _surface_bounds(stroke, 5e-3)
    h = surface.heights
    max_depth = spec.get("max_depth", 2e-3)
    state_lower = spec.get("state_lower", [x0, y0, float(h.min()) - max_depth, -math.pi])
    state_upper = spec.get("state_upper", [x1, y1, float(h.max()) + 1e-2, math.pi])
    input_lower = spec.get("input_lower", [-0.1, -0.1, -0.05, -10.0])
    input_upper = spec.get("input_upper", [0.1, 0.1, 0.05, 10.0])
    return BoxConstraints(state_lower, state_upper, input_lower, input_upper)


# Position errors weigh 1e4 more than the library default. With the lighter
# weight the planner scrubs back and forth to wear the tip faster, which the
# width model does not see but the canvas does.
PLANNER_DEFAULTS = {"Q_diag": [1e10, 1e10, 1e8], "restarts": 4}


def build_planner_config(cfg: ExperimentConfig) -> PlannerConfig:
    spec = dict(cfg.planner)
    if "Q" not in spec:
        spec = {**PLANNER_DEFAULTS, **spec}
    if "Q_diag" in spec:
        spec["Q"] = np.diag(spec.pop("Q_diag"))
    elif "Q" in spec:
        spec["Q"] = np.array(spec["Q"], dtype=float)
    spec.setdefault("seed", cfg.seed)
    try:
        return PlannerConfig(**spec)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad planner config: {exc}") from exc


def initial_state(cfg: ExperimentConfig, stroke: ReferenceStroke, surface: SurfaceMap,
                  pcfg: PlannerConfig) -> np.ndarray:
    x, y = stroke.xy[0]
    z = float(surface.heights_at(x, y)) - pcfg.nominal_depth
    return np.array([x, y, z, math.radians(cfg.initial_psi_deg)])


def run_calibration(cfg: ExperimentConfig, out_dir=None) -> tuple[ForceModelParams, CalibrationSet]:
    """Sweep the true force law, fit the linear map, optionally write the data and fit."""
    stroke = build_stroke(cfg)
    surface = build_surface(cfg, stroke)
    truth = build_truth(cfg, surface)
    cal = cfg.calibration
    noise = cfg.truth.noise_sd if cal.noise_sd is None else cal.noise_sd
    data = sweep_calibration(surface, truth.force_law, cal.depths, cal.samples_per_depth, noise, cfg.seed)
    params = fit_force(data)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_calibration(data, out / "calibration.csv")
        write_surface(surface, out / "surface.csv")
        resid = force_residuals(params, data)
        _write_json(out / "force_fit.json", {
            "theta": params.theta, "theta0": params.theta0, "rows": len(data),
            "rms_residual": float(np.sqrt(np.mean(resid ** 2))),
        })
    return params, data


def _write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


class ArmRunner:
    """State carried across iterations of one arm: the physical tip and the learned model."""

    def __init__(self, cfg: ExperimentConfig, arm: str, out_dir=None):
        if arm not in cfg.arms:
            raise ConfigError(f"unknown arm {arm!r}")
        self.cfg = cfg
        self.arm = arm
        self.spec = cfg.arms[arm]
        self.stroke = build_stroke(cfg)
        self.surface = build_surface(cfg, self.stroke)
        self.truth = build_truth(cfg, self.surface)
        self.constraints = build_constraints(cfg, self.stroke, self.surface)
        self.pcfg = build_planner_config(cfg)
        self.x0 = initial_state(cfg, self.stroke, self.surface, self.pcfg)
        self.out_dir = None if out_dir is None else Path(out_dir) / arm
        if cfg.calibration.enabled:
            self.params, self.data = run_calibration(cfg)
        else:
            self.params = ForceModelParams(cfg.model.theta, cfg.model.theta0)
            self.data = CalibrationSet([], [])
        self.kd_est = cfg.model.kd
        self.d_est = self.spec.d0
        self.true_tip = self.spec.tip(kd=cfg.truth.kd)
        self.rng = np.random.default_rng(cfg.seed)
        self.iteration = 0

    def planning_tip(self) -> ToolTipState:
        return self.spec.tip(kd=self.kd_est, d=self.d_est)

    def plan(self) -> Plan:
        return plan_stroke(self.stroke, self.x0, self.planning_tip(), self.params, self.surface,
                           self.constraints, self.pcfg)

    def blank_canvas(self, plan: Plan | None = None, margin: float | None = None) -> Canvas:
        """A fresh sheet covering the reference and, if given, the planned path."""
        m = self.cfg.measurement
        xy = self.stroke.xy if plan is None else np.vstack([self.stroke.xy, plan.predicted_states[:, :2]])
        lo, hi = xy.min(axis=0), xy.max(axis=0)
        return Canvas.blank((lo[0], lo[1], hi[0], hi[1]), m.scale, m.margin if margin is None else margin)

    def execute(self, plan: Plan):
        """Run the plan on a fresh sheet, enlarging it until every footprint fits."""
        margin = self.cfg.measurement.margin
        for _ in range(8):
            state = copy.deepcopy(self.rng.bit_generator.state)
            try:
                return execute(plan, self.truth, self.true_tip, self.blank_canvas(plan, margin),
                               self.stroke.dt, self.rng)
            except CanvasOverflow:
                self.rng.bit_generator.state = state
                margin *= 2.0
        raise CanvasOverflow(f"footprint does not fit a sheet with margin {margin} m")

    def step(self) -> IterationRecord:
        self.iteration += 1
        k = self.iteration
        plan_tip = self.planning_tip()
        plan_params = self.params
        d_start_true = self.true_tip.d
        plan = self.plan()
        ex = self.execute(plan)
        self.true_tip = ex.tip
        m = self.cfg.measurement
        mask = threshold(ex.canvas, m.level)
        profile = width_profile(mask, self.stroke, ex.canvas, m.search)
        V = error_metric(profile, self.stroke)

        # force sensor + recorded contact heights give new regression rows
        rel = ex.states[:, 2] - self.surface.heights_at(ex.states[:, 0], ex.states[:, 1])
        contact = ex.forces > 0
        self.data = self.data.extend(rel[contact], ex.forces[contact])
        self.params = fit_force(self.data)
        resid = force_residuals(self.params, self.data)
        d_fit = plan_tip.d
        if not self.cfg.model.freeze_kd and np.any(contact & profile.valid):
            if self.cfg.model.fit_offset:
                self.kd_est, d_fit = fit_degradation(profile.widths, ex.states, plan_tip, self.params,
                                                     self.surface, profile.valid, self.cfg.model.kd_max,
                                                     self.pcfg.width_variant, fit_offset=True)
            else:
                self.kd_est = fit_degradation(profile.widths, ex.states, plan_tip, self.params, self.surface,
                                              profile.valid, self.cfg.model.kd_max, self.pcfg.width_variant)
        fitted_tip = self.spec.tip(kd=self.kd_est, d=min(d_fit, self.spec.d_max))
        self.d_est = float(predicted_offsets(ex.states, fitted_tip, self.params, self.surface)[-1])

        record = IterationRecord(k, self.arm, V, self.params.theta, self.params.theta0, self.kd_est,
                                 plan_tip.d, d_start_true, float(np.sqrt(np.mean(resid ** 2))))
        if self.out_dir is not None:
            it_dir = self.out_dir / f"iter_{k:02d}"
            it_dir.mkdir(parents=True, exist_ok=True)
            write_plan(plan, it_dir / "plan.csv")
            write_canvas(ex.canvas, it_dir / "canvas.pgm")
            write_trace(ex, it_dir / "trace.csv")
            write_profile(profile, self.stroke, it_dir / "profile.csv")
            write_stroke_csv(self.stroke, it_dir / "stroke.csv")
            _write_json(it_dir / "params.json", {
                "iteration": k, "arm": self.arm, "V_m": V,
                "planned_with": {"theta": plan_params.theta, "theta0": plan_params.theta0, "d0": plan_tip.d,
                                 "kd": plan_tip.kd},
                "fitted": {"theta": self.params.theta, "theta0": self.params.theta0, "kd": self.kd_est,
                           "d_next": self.d_est},
                "measurement": {"level": m.level, "search": m.search},
            })
            record.artifacts = {name: str(it_dir / name) for name in
                                ("plan.csv", "canvas.pgm", "trace.csv", "profile.csv", "params.json")}
        return record


def run_iterations(cfg: ExperimentConfig, arm: str | None = None, out_dir=None) -> list[IterationRecord]:
    """Run ``cfg.iterations`` strokes with one persistent tip; the canvas is fresh each time."""
    arm = arm if arm is not None else next(iter(cfg.arms))
    runner = ArmRunner(cfg, arm, out_dir)
    return [runner.step() for _ in range(cfg.iterations)]


ITERATION_FIELDS = ["iteration", "arm", "V_m", "theta", "theta0", "kd"]


def write_iterations(records: list[IterationRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(ITERATION_FIELDS)
        for r in records:
            writer.writerow([r.iteration, r.arm, repr(r.V), repr(r.theta), repr(r.theta0), repr(r.kd)])


def run_comparison(cfg: ExperimentConfig, out_dir=None, baseline: str = "baseline",
                   treatment: str = "tilted") -> dict:
    """Both arms on the same ground truth and seed; improvement is ``100 * (1 - V_treat / V_base)``."""
    for name in (baseline, treatment):
        if name not in cfg.arms:
            raise ConfigError(f"comparison needs arm {name!r}")
    runs = {name: run_iterations(cfg, name, out_dir) for name in (baseline, treatment)}
    base = [r.V for r in runs[baseline]]
    treat = [r.V for r in runs[treatment]]
    improvement = [100.0 * (1.0 - t / b) if b > 0 else 0.0 for b, t in zip(base, treat)]
    summary = {
        "iterations": cfg.iterations,
        "V": {baseline: base, treatment: treat},
        "improvement_percent": improvement,
        "treatment_better_every_iteration": all(t < b for b, t in zip(base, treat)),
    }
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_iterations(runs[baseline] + runs[treatment], out / "iterations.csv")
        _write_json(out / "summary.json", summary)
    summary["records"] = runs
    return summary
