"""Command line entry point: ``wearplan <command> --config cfg.json [--out DIR]``.

Exit status is 0 on success, 2 for configuration or input errors and 3 for
numerical failures.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import ConfigError, NumericalError, WearplanError
from .experiment import (ArmRunner, ExperimentConfig, build_stroke, run_calibration, run_comparison,
                         run_iterations, write_iterations)
from .planner import read_plan, write_plan
from .ref_stroke import read_stroke_csv, write_stroke_csv
from .sim_canvas import read_canvas, write_canvas, write_trace
from .stroke_vision import error_metric, threshold, width_profile, write_profile, write_summary

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


def _arm(cfg: ExperimentConfig, name: str | None) -> str:
    return name if name is not None else next(iter(cfg.arms))


def cmd_calibrate(cfg, out: Path, args) -> dict:
    params, data = run_calibration(cfg, out)
    return {"theta": params.theta, "theta0": params.theta0, "rows": len(data)}


def cmd_plan(cfg, out: Path, args) -> dict:
    runner = ArmRunner(cfg, _arm(cfg, args.arm))
    plan = runner.plan()
    out.mkdir(parents=True, exist_ok=True)
    write_plan(plan, out / "plan.csv")
    write_stroke_csv(runner.stroke, out / "stroke.csv")
    return {"predicted_cost": plan.predicted_cost, "warm_start_cost": plan.warm_start_cost,
            "iterations": plan.iterations}


def cmd_execute(cfg, out: Path, args) -> dict:
    runner = ArmRunner(cfg, _arm(cfg, args.arm))
    plan_path = Path(args.plan) if args.plan else out / "plan.csv"
    try:
        plan = read_plan(plan_path)
    except OSError as exc:
        raise ConfigError(f"cannot read plan {plan_path}: {exc}") from exc
    if plan.horizon != runner.stroke.horizon:
        raise ConfigError(f"plan has {plan.horizon} steps, stroke has {runner.stroke.horizon}")
    ex = runner.execute(plan)
    out.mkdir(parents=True, exist_ok=True)
    write_canvas(ex.canvas, out / "canvas.pgm")
    write_trace(ex, out / "trace.csv")
    return {"d_end": ex.tip.d, "contact_samples": int((ex.forces > 0).sum())}


def cmd_measure(cfg, out: Path, args) -> dict:
    canvas_path = Path(args.canvas) if args.canvas else out / "canvas.pgm"
    try:
        canvas = read_canvas(canvas_path)
        stroke = read_stroke_csv(args.stroke, cfg.stroke.get("dt", 0.008)) if args.stroke else build_stroke(cfg)
    except OSError as exc:
        raise ConfigError(f"cannot read measurement input: {exc}") from exc
    m = cfg.measurement
    level = m.level if args.level is None else args.level
    profile = width_profile(threshold(canvas, level), stroke, canvas, m.search)
    V = error_metric(profile, stroke)
    out.mkdir(parents=True, exist_ok=True)
    write_profile(profile, stroke, out / "profile.csv")
    write_summary(out / "measure.json", V_m=V, valid=int(profile.valid.sum()), samples=len(profile))
    return {"V_m": V}


def cmd_iterate(cfg, out: Path, args) -> dict:
    records = run_iterations(cfg, _arm(cfg, args.arm), out)
    write_iterations(records, out / "iterations.csv")
    return {"V_m": [r.V for r in records]}


def cmd_compare(cfg, out: Path, args) -> dict:
    summary = run_comparison(cfg, out, args.baseline, args.treatment)
    return {"improvement_percent": summary["improvement_percent"],
            "treatment_better_every_iteration": summary["treatment_better_every_iteration"]}


COMMANDS = {
    "calibrate": (cmd_calibrate, "sweep the true force law and fit the linear map"),
    "plan": (cmd_plan, "plan one stroke with the current model"),
    "execute": (cmd_execute, "replay a plan on the simulated tool and canvas"),
    "measure": (cmd_measure, "measure widths on a canvas and compute the error metric"),
    "iterate": (cmd_iterate, "run the plan/execute/measure/refit loop for one arm"),
    "compare": (cmd_compare, "run both arms and report relative improvement"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wearplan", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="experiment JSON (defaults apply when omitted)")
        p.add_argument("--out", help="output directory (overrides output_dir in the config)")
        if name in ("plan", "execute", "iterate"):
            p.add_argument("--arm", help="arm name (default: first arm in the config)")
        if name == "execute":
            p.add_argument("--plan", help="plan CSV (default: OUT/plan.csv)")
        if name == "measure":
            p.add_argument("--canvas", help="PGM canvas (default: OUT/canvas.pgm)")
            p.add_argument("--stroke", help="reference stroke CSV (default: from the config)")
            p.add_argument("--level", type=int, help="threshold level 0..255")
        if name == "compare":
            p.add_argument("--baseline", default="baseline")
            p.add_argument("--treatment", default="tilted")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
        out = Path(args.out if args.out else cfg.output_dir)
        handler = COMMANDS[args.command][0]
        result = handler(cfg, out, args)
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (WearplanError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(json.dumps(result, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
