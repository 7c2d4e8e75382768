"""Calibration sweep at several noise levels: how well does the linear fit recover the true map?

Prints the fitted (theta, theta0) and RMS residual per noise level and writes
the noisiest data set as penetration/force CSV for plotting.
"""

import argparse
from pathlib import Path

import numpy as np

from wearplan.force_model import (ForceLaw, SurfaceMap, fit_force, force_residuals, sweep_calibration,
                                  write_calibration)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--theta", type=float, default=-1000.0)
    ap.add_argument("--theta0", type=float, default=0.05)
    ap.add_argument("--quadratic", type=float, default=1e5, help="N/m^2 term the linear fit cannot capture")
    ap.add_argument("--noise", type=float, nargs="+", default=[0.0, 0.01, 0.05, 0.1])
    ap.add_argument("--samples", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="out/calibration_sweep")
    args = ap.parse_args()

    law = ForceLaw(args.theta, args.theta0, args.quadratic)
    depths = [5e-4, 1e-3, 1.5e-3]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    print(f"truth: theta={args.theta:g} N/m theta0={args.theta0:g} N quadratic={args.quadratic:g} N/m^2")
    print(f"{'noise (N)':>9}  {'theta':>10}  {'theta0':>8}  {'rms resid (N)':>13}")
    for sd in args.noise:
        data = sweep_calibration(SurfaceMap.flat(), law, depths, args.samples, sd, args.seed)
        p = fit_force(data)
        rms = float(np.sqrt(np.mean(force_residuals(p, data) ** 2)))
        print(f"{sd:>9.3f}  {p.theta:>10.2f}  {p.theta0:>8.4f}  {rms:>13.4f}")
    write_calibration(data, out / "calibration.csv")
    print(f"last data set written to {out / 'calibration.csv'}")


if __name__ == "__main__":
    main()
