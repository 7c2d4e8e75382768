"""Run the upright vs tilted comparison and print the per-iteration error table.

    python3 scripts/run_comparison.py [--config cfg.json] [--out out/compare] [--seed 0]
"""

import argparse

from wearplan.experiment import ExperimentConfig, run_comparison


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config")
    ap.add_argument("--out", default="out/compare")
    ap.add_argument("--seed", type=int)
    args = ap.parse_args()

    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg = ExperimentConfig.from_dict({**cfg.to_dict(), "seed": args.seed})
    summary = run_comparison(cfg, args.out)
    base, treat = summary["V"]["baseline"], summary["V"]["tilted"]

    print(f"{'iter':>4}  {'V upright (mm)':>15}  {'V tilted (mm)':>14}  {'improvement':>11}")
    for k, (b, t, imp) in enumerate(zip(base, treat, summary["improvement_percent"]), start=1):
        print(f"{k:>4}  {b * 1e3:>15.3f}  {t * 1e3:>14.3f}  {imp:>10.1f}%")
    print(f"tilted better at every iteration: {summary['treatment_better_every_iteration']}")
    print(f"outputs in {args.out}")


if __name__ == "__main__":
    main()
