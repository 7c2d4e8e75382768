"""Reference strokes: sampled (x, y, width) targets, one sample per control step."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateTangent, LengthMismatch, NonPositiveWidth

DEFAULT_DT = 0.008


@dataclass(frozen=True)
class StrokeFrame:
    tangent: np.ndarray
    normal: np.ndarray


@dataclass(frozen=True, eq=False)
class ReferenceStroke:
    """Reference positions and target deposition widths, all in meters.

    ``xy`` has shape ``(N + 1, 2)`` and ``widths`` shape ``(N + 1,)``; the
    horizon ``N`` counts control inputs, not samples.
    """

    xy: np.ndarray
    widths: np.ndarray
    dt: float = DEFAULT_DT

    def __post_init__(self):
        xy = np.array(self.xy, dtype=float).reshape(-1, 2)
        widths = np.array(self.widths, dtype=float).reshape(-1)
        if len(xy) != len(widths):
            raise LengthMismatch(f"{len(xy)} points but {len(widths)} widths")
        if len(xy) < 1:
            raise LengthMismatch("a stroke needs at least one sample")
        if not np.all(np.isfinite(xy)):
            raise ValueError("stroke coordinates must be finite")
        if not np.all(widths > 0):
            raise NonPositiveWidth("every reference width must be > 0")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        xy.flags.writeable = False
        widths.flags.writeable = False
        object.__setattr__(self, "xy", xy)
        object.__setattr__(self, "widths", widths)

    @property
    def horizon(self) -> int:
        return len(self.widths) - 1

    @property
    def samples(self) -> list[tuple[float, float, float]]:
        return [(float(x), float(y), float(w)) for (x, y), w in zip(self.xy, self.widths)]

    def frame_at(self, t: int) -> StrokeFrame:
        return frame_at(self, t)

    def frames(self) -> tuple[np.ndarray, np.ndarray]:
        """Unit tangents and normals for every sample, shape ``(N + 1, 2)`` each."""
        tangents = np.array([frame_at(self, t).tangent for t in range(self.horizon + 1)])
        normals = np.column_stack([-tangents[:, 1], tangents[:, 0]])
        return tangents, normals


def build_polyline_stroke(points, widths, dt: float = DEFAULT_DT) -> ReferenceStroke:
    points = list(points)
    widths = list(widths)
    if len(points) != len(widths):
        raise LengthMismatch(f"{len(points)} points but {len(widths)} widths")
    if len(points) < 2:
        raise LengthMismatch("a polyline stroke needs at least two samples")
    if any(not w > 0 for w in widths):
        raise NonPositiveWidth("every reference width must be > 0")
    return ReferenceStroke(np.asarray(points, dtype=float), np.asarray(widths, dtype=float), dt)


def frame_at(stroke: ReferenceStroke, t: int) -> StrokeFrame:
    """Tangent by central difference (one-sided at the ends), normal rotated +90 degrees."""
    n = stroke.horizon
    if not 0 <= t <= n:
        raise IndexError(f"sample {t} outside [0, {n}]")
    if n == 0:
        raise DegenerateTangent("a single-sample stroke has no tangent")
    xy = stroke.xy
    lo, hi = max(t - 1, 0), min(t + 1, n)
    diff = xy[hi] - xy[lo]
    norm = float(np.hypot(diff[0], diff[1]))
    if norm == 0.0 or np.any(np.all(xy[lo + 1:hi + 1] == xy[lo:hi], axis=1)):
        raise DegenerateTangent(f"coincident samples around index {t}")
    tangent = diff / norm
    normal = np.array([-tangent[1], tangent[0]])
    return StrokeFrame(tangent, normal)


def l_stroke(
    leg_length: float = 0.01,
    steps_per_leg: int = 50,
    first_width: float = 1.0e-3,
    second_width: float = 0.7e-3,
    dt: float = DEFAULT_DT,
    origin: tuple[float, float] = (0.0, 0.0),
) -> ReferenceStroke:
    """Rightward leg at ``first_width``, then a downward (-y) leg at ``second_width``.

    The corner sample belongs to the first leg.
    """
    s = np.linspace(0.0, leg_length, steps_per_leg + 1)
    right = np.column_stack([s, np.zeros_like(s)])
    down = np.column_stack([np.full(steps_per_leg, leg_length), -s[1:]])
    xy = np.vstack([right, down]) + np.asarray(origin, dtype=float)
    widths = np.concatenate([
        np.full(steps_per_leg + 1, first_width),
        np.full(steps_per_leg, second_width),
    ])
    return ReferenceStroke(xy, widths, dt)


def write_stroke_csv(stroke: ReferenceStroke, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x_m", "y_m", "w_m"])
        for x, y, w in stroke.samples:
            writer.writerow([repr(x), repr(y), repr(w)])


def read_stroke_csv(path, dt: float = DEFAULT_DT) -> ReferenceStroke:
    with open(Path(path), newline="") as fh:
        rows = list(csv.DictReader(fh))
    points = [(float(r["x_m"]), float(r["y_m"])) for r in rows]
    widths = [float(r["w_m"]) for r in rows]
    return build_polyline_stroke(points, widths, dt)
