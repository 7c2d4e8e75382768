"""Linear force map, surface height map, calibration sweeps, and parameter fits.

Sign convention: ``z - z_ref < 0`` means the tool is pressed into the surface.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmptyDepths, NoContact, OutOfBounds, RankDeficient
from .tool_geometry import ToolTipState, axis_rates, _projections

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class ForceModelParams:
    theta: float
    theta0: float


@dataclass(frozen=True)
class ForceLaw:
    """Ground-truth force: linear map plus an optional quadratic term, floored at 0 N."""

    theta: float
    theta0: float
    quadratic: float = 0.0

    def __call__(self, rel_z):
        rel_z = np.asarray(rel_z, dtype=float)
        return np.maximum(self.theta * rel_z + self.theta0 + self.quadratic * rel_z * rel_z, 0.0)


def force(params: ForceModelParams, z, z_ref):
    """``theta * (z - z_ref) + theta0``, floored at zero."""
    rel = np.asarray(z, dtype=float) - np.asarray(z_ref, dtype=float)
    out = np.maximum(params.theta * rel + params.theta0, 0.0)
    return float(out) if out.ndim == 0 else out


def contact_force(params: ForceModelParams, z, z_ref):
    """Like :func:`force` but zero wherever the tool is not below the surface."""
    rel = np.asarray(z, dtype=float) - np.asarray(z_ref, dtype=float)
    out = np.where(rel < 0, np.maximum(params.theta * rel + params.theta0, 0.0), 0.0)
    return float(out) if out.ndim == 0 else out


def _lerp(a, b, t):
    # anchored at the nearer end: exact at both nodes and on equal values
    return np.where(t < 0.5, a + t * (b - a), b - (1.0 - t) * (b - a))


@dataclass(frozen=True, eq=False)
class SurfaceMap:
    """Contact heights on a regular grid; ``heights[iy, ix]`` sits at ``origin + (ix*dx, iy*dy)``."""

    heights: np.ndarray
    origin: tuple[float, float] = (0.0, 0.0)
    spacing: tuple[float, float] = (1e-3, 1e-3)

    def __post_init__(self):
        h = np.array(self.heights, dtype=float)
        if h.ndim != 2 or h.shape[0] < 2 or h.shape[1] < 2:
            raise ValueError("surface grid must be 2-D with at least 2x2 nodes")
        if not np.all(np.isfinite(h)):
            raise ValueError("surface heights must be finite")
        sp = self.spacing
        sp = (float(sp), float(sp)) if np.isscalar(sp) else (float(sp[0]), float(sp[1]))
        if not (sp[0] > 0 and sp[1] > 0):
            raise ValueError("grid spacing must be positive")
        h.flags.writeable = False
        object.__setattr__(self, "heights", h)
        object.__setattr__(self, "spacing", sp)
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @classmethod
    def flat(cls, height: float = 0.0, bounds=(-0.05, -0.05, 0.05, 0.05), spacing: float = 5e-3) -> SurfaceMap:
        return cls.planar(height, 0.0, 0.0, bounds, spacing)

    @classmethod
    def planar(cls, height: float, slope_x: float, slope_y: float,
               bounds=(-0.05, -0.05, 0.05, 0.05), spacing: float = 5e-3) -> SurfaceMap:
        x0, y0, x1, y1 = bounds
        nx = int(math.ceil((x1 - x0) / spacing)) + 1
        ny = int(math.ceil((y1 - y0) / spacing)) + 1
        xs = x0 + spacing * np.arange(nx)
        ys = y0 + spacing * np.arange(ny)
        h = height + slope_x * xs[None, :] + slope_y * ys[:, None]
        return cls(h, (x0, y0), (spacing, spacing))

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        ny, nx = self.heights.shape
        x0, y0 = self.origin
        return x0, y0, x0 + (nx - 1) * self.spacing[0], y0 + (ny - 1) * self.spacing[1]

    def heights_at(self, x, y) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        ny, nx = self.heights.shape
        fx = (x - self.origin[0]) / self.spacing[0]
        fy = (y - self.origin[1]) / self.spacing[1]
        eps = 1e-9
        snap = 1e-12
        if np.any(fx < -eps) or np.any(fx > nx - 1 + eps) or np.any(fy < -eps) or np.any(fy > ny - 1 + eps):
            raise OutOfBounds("query point outside the surface grid")
        # snap coordinates a rounding error away from a node onto it
        fx = np.clip(np.where(np.abs(fx - np.rint(fx)) <= snap, np.rint(fx), fx), 0, nx - 1)
        fy = np.clip(np.where(np.abs(fy - np.rint(fy)) <= snap, np.rint(fy), fy), 0, ny - 1)
        ix = np.minimum(np.floor(fx).astype(int), nx - 2)
        iy = np.minimum(np.floor(fy).astype(int), ny - 2)
        tx, ty = fx - ix, fy - iy
        h = self.heights
        lo = _lerp(h[iy, ix], h[iy, ix + 1], tx)
        hi = _lerp(h[iy + 1, ix], h[iy + 1, ix + 1], tx)
        return _lerp(lo, hi, ty)


def height_at(surface: SurfaceMap, x: float, y: float) -> float:
    return float(surface.heights_at(x, y))


def write_surface(surface: SurfaceMap, path) -> None:
    """JSON header line (origin, spacing, shape) followed by CSV rows of heights."""
    path = Path(path)
    header = {"origin": list(surface.origin), "spacing": list(surface.spacing),
              "shape": list(surface.heights.shape)}
    with open(path, "w", newline="") as fh:
        fh.write(json.dumps(header) + "\n")
        writer = csv.writer(fh)
        for row in surface.heights:
            writer.writerow([repr(float(v)) for v in row])


def read_surface(path) -> SurfaceMap:
    with open(Path(path), newline="") as fh:
        header = json.loads(fh.readline())
        rows = [[float(v) for v in row] for row in csv.reader(fh) if row]
    return SurfaceMap(np.array(rows), tuple(header["origin"]), tuple(header["spacing"]))


@dataclass(frozen=True, eq=False)
class CalibrationSet:
    """Rows of ``(z - z_ref, force)``; negative first column means penetration."""

    penetration: np.ndarray
    force: np.ndarray

    def __post_init__(self):
        p = np.array(self.penetration, dtype=float).reshape(-1)
        f = np.array(self.force, dtype=float).reshape(-1)
        if p.shape != f.shape:
            raise ValueError("penetration and force columns differ in length")
        object.__setattr__(self, "penetration", p)
        object.__setattr__(self, "force", f)

    def __len__(self) -> int:
        return len(self.force)

    def extend(self, penetration, force) -> CalibrationSet:
        return CalibrationSet(np.concatenate([self.penetration, np.ravel(penetration)]),
                              np.concatenate([self.force, np.ravel(force)]))


def write_calibration(data: CalibrationSet, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["penetration_m", "force_n"])
        for p, f in zip(data.penetration, data.force):
            writer.writerow([repr(float(p)), repr(float(f))])


def read_calibration(path) -> CalibrationSet:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return CalibrationSet([float(r["penetration_m"]) for r in rows], [float(r["force_n"]) for r in rows])


def sweep_calibration(surface: SurfaceMap, true_force, depths, samples_per_depth: int = 100,
                      noise_sd: float = 0.0, seed: int = 0, location=None) -> CalibrationSet:
    """Press the tool in with one raised-cosine cycle per listed depth and record forces.

    Each cycle runs the penetration from 0 up to the depth and back, so the
    recorded ``z - z_ref`` values lie in ``[-max(depths), 0]``.
    """
    depths = [float(d) for d in depths]
    if not depths:
        raise EmptyDepths("at least one sweep depth is required")
    if noise_sd < 0:
        raise ValueError("noise_sd must be nonnegative")
    if location is None:
        x0, y0, x1, y1 = surface.bounds
        location = (0.5 * (x0 + x1), 0.5 * (y0 + y1))
    z_ref = height_at(surface, *location)
    rng = np.random.default_rng(seed)
    phase = 2.0 * np.pi * np.arange(samples_per_depth) / samples_per_depth
    rel = []
    for depth in depths:
        z = z_ref - 0.5 * abs(depth) * (1.0 - np.cos(phase))
        rel.append(np.minimum(z - z_ref, 0.0))
    rel = np.concatenate(rel)
    forces = np.asarray(true_force(rel), dtype=float)
    if noise_sd > 0:
        forces = forces + rng.normal(0.0, noise_sd, size=forces.shape)
    return CalibrationSet(rel, forces)


def fit_force(data: CalibrationSet) -> ForceModelParams:
    """Ordinary least squares on regressor rows ``[z - z_ref, 1]``."""
    if len(np.unique(data.penetration)) < 2:
        raise RankDeficient("need at least two distinct penetration values")
    Z = np.column_stack([data.penetration, np.ones_like(data.penetration)])
    theta, *_ = np.linalg.lstsq(Z, data.force, rcond=None)
    return ForceModelParams(float(theta[0]), float(theta[1]))


def force_residuals(params: ForceModelParams, data: CalibrationSet) -> np.ndarray:
    return data.force - (params.theta * data.penetration + params.theta0)


def _wear_terms(trajectory, params: ForceModelParams, surface: SurfaceMap, tip: ToolTipState,
                variant: str):
    """Per-sample width-per-offset gain, contact flags, and cumulative wear exposure."""
    traj = np.asarray(trajectory, dtype=float).reshape(-1, 4)
    z_ref = surface.heights_at(traj[:, 0], traj[:, 1])
    rel = traj[:, 2] - z_ref
    contact = rel < 0
    forces = np.where(contact, np.maximum(params.theta * rel + params.theta0, 0.0), 0.0)
    steps = np.hypot(np.diff(traj[:, 0]), np.diff(traj[:, 1]))
    exposure = np.concatenate([[0.0], np.cumsum(forces[:-1] * steps)])
    ra, rb = axis_rates(tip.m, tip.a)
    p, q = _projections(ra, rb, traj[:, 3], variant)
    gain = np.maximum(p, q)
    return gain, contact, exposure


def _fit_mask(widths_measured, contact, valid):
    w = np.asarray(widths_measured, dtype=float).reshape(-1)
    if len(w) != len(contact):
        raise ValueError("measured widths must align with trajectory samples")
    mask = contact.copy()
    if valid is not None:
        mask &= np.asarray(valid, dtype=bool)
    return w, mask


def _profile_offset(w, gain, exposure, kd, mask):
    g = gain[mask]
    den = float(np.dot(g, g))
    if den == 0:
        return 0.0
    return max(float(np.dot(g, w[mask] - g * kd * exposure[mask]) / den), 0.0)


def golden_section(fn, lo: float, hi: float, tol: float, max_iter: int = 200) -> float:
    """Minimizer of a unimodal scalar function on ``[lo, hi]``; endpoints are also checked."""
    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = fn(c), fn(d)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = fn(d)
    candidates = [(fn(lo), lo), (fc, c), (fd, d), (fn(hi), hi)]
    best = min(candidates, key=lambda item: item[0])
    return best[1]


def fit_degradation(widths_measured, trajectory, tip_template: ToolTipState, params: ForceModelParams,
                    surface: SurfaceMap, valid=None, k_max: float = 1.0, variant: str = "cos_major",
                    fit_offset: bool = False):
    """Wear gain minimizing the squared width misfit along an executed trajectory.

    The model rolls the wear law from ``tip_template.d`` using forces from
    ``params``, and only contact samples (and ``valid`` ones, if given) enter
    the misfit. With ``fit_offset`` the starting offset is re-estimated in
    closed form for every trial gain and ``(kd, d0)`` is returned instead.
    """
    gain, contact, exposure = _wear_terms(trajectory, params, surface, tip_template, variant)
    if not np.any(contact):
        raise NoContact("the trajectory never reaches below the surface")
    w, mask = _fit_mask(widths_measured, contact, valid)
    if not np.any(mask):
        raise NoContact("no valid width measurements at contact samples")
    d_max = tip_template.d_max

    def offset_for(kd):
        return _profile_offset(w, gain, exposure, kd, mask) if fit_offset else tip_template.d

    def misfit(kd):
        d = np.minimum(offset_for(kd) + kd * exposure, d_max)
        r = gain[mask] * d[mask] - w[mask]
        return float(np.dot(r, r))

    kd = golden_section(misfit, 0.0, k_max, tol=1e-12 * max(k_max, 1.0))
    if fit_offset:
        return kd, offset_for(kd)
    return kd


def predicted_offsets(trajectory, tip: ToolTipState, params: ForceModelParams, surface: SurfaceMap) -> np.ndarray:
    """Offset trace implied by the wear law along ``trajectory`` (same length)."""
    _, _, exposure = _wear_terms(trajectory, params, surface, tip, "cos_major")
    return np.minimum(tip.d + tip.kd * exposure, tip.d_max)
