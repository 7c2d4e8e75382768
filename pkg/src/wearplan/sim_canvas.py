"""Ground-truth stand-in for robot, pencil and paper.

A plan is replayed open loop. Wherever the tool is below the true surface the
elliptical footprint is swept along the motion segment onto a binary raster,
and the true tip wears under the true contact force.
"""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .errors import CanvasOverflow
from .force_model import ForceLaw, SurfaceMap
from .kinematics import rollout_states
from .planner import Plan
from .tool_geometry import ToolTipState, axis_rates, center_offset

INK = 255
DEFAULT_SCALE = 1e-5


@dataclass(eq=False)
class Canvas:
    """Binary raster; pixel ``[i, j]`` is centered at ``origin + (j, i) * scale`` (meters)."""

    pixels: np.ndarray
    scale: float = DEFAULT_SCALE
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("canvas scale must be positive")
        self.pixels = np.asarray(self.pixels, dtype=np.uint8)
        self.origin = (float(self.origin[0]), float(self.origin[1]))

    @classmethod
    def blank(cls, bounds, scale: float = DEFAULT_SCALE, margin: float = 0.0) -> Canvas:
        x0, y0, x1, y1 = bounds
        x0, y0, x1, y1 = x0 - margin, y0 - margin, x1 + margin, y1 + margin
        w = int(math.ceil((x1 - x0) / scale)) + 1
        h = int(math.ceil((y1 - y0) / scale)) + 1
        return cls(np.zeros((h, w), dtype=np.uint8), scale, (x0, y0))

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape

    def copy(self) -> Canvas:
        return Canvas(self.pixels.copy(), self.scale, self.origin)

    def to_pixel(self, x, y):
        """Fractional (column, row) coordinates of world points."""
        return (np.asarray(x) - self.origin[0]) / self.scale, (np.asarray(y) - self.origin[1]) / self.scale

    def __eq__(self, other):
        if not isinstance(other, Canvas):
            return NotImplemented
        return (self.scale == other.scale and self.origin == other.origin
                and np.array_equal(self.pixels, other.pixels))


@dataclass(frozen=True)
class GroundTruth:
    force_law: ForceLaw
    kd: float
    surface: SurfaceMap
    noise_sd: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be nonnegative")
        if self.kd < 0:
            raise ValueError("true wear gain must be nonnegative")


class Execution(NamedTuple):
    canvas: Canvas
    states: np.ndarray    # (N+1, 4) executed states
    offsets: np.ndarray   # (N+1,) true plane offset d(t)
    forces: np.ndarray    # (N+1,) true contact force (sensor reading)
    z_ref: np.ndarray     # (N+1,) true surface height under the tool
    tip: ToolTipState     # worn tip after the stroke


def footprint_frame(tip: ToolTipState, psi: float, tangent) -> tuple[np.ndarray, np.ndarray, float, float]:
    """Unit major/minor directions and semi-axes of the footprint in world coordinates.

    The minor axis sits at angle ``psi`` (counterclockwise) from ``tangent``.
    """
    tx, ty = tangent
    c, s = math.cos(psi), math.sin(psi)
    minor = np.array([c * tx - s * ty, s * tx + c * ty])
    major = np.array([-minor[1], minor[0]])
    ra, rb = axis_rates(tip.m, tip.a)
    return major, minor, 0.5 * ra * tip.d, 0.5 * rb * tip.d


def stamp_segment(canvas: Canvas, tip: ToolTipState, psi: float, tangent, start, end=None) -> int:
    """Fill every pixel whose center lies in the footprint swept from ``start`` to ``end``.

    ``start``/``end`` are tool-axis positions; the footprint center is shifted
    along the major direction by the tilt offset. Returns the number of
    newly inked pixels.
    """
    if tip.d <= 0:
        return 0
    major, minor, A, B = footprint_frame(tip, psi, tangent)
    shift = center_offset(tip) * major
    p0 = np.asarray(start, dtype=float) + shift
    p1 = p0 if end is None else np.asarray(end, dtype=float) + shift
    hx = math.hypot(A * major[0], B * minor[0])
    hy = math.hypot(A * major[1], B * minor[1])
    cx0, cy0 = canvas.to_pixel(min(p0[0], p1[0]) - hx, min(p0[1], p1[1]) - hy)
    cx1, cy1 = canvas.to_pixel(max(p0[0], p1[0]) + hx, max(p0[1], p1[1]) + hy)
    j0, i0 = int(math.ceil(cx0)), int(math.ceil(cy0))
    j1, i1 = int(math.floor(cx1)), int(math.floor(cy1))
    h, w = canvas.shape
    if j0 < 0 or i0 < 0 or j1 >= w or i1 >= h:
        raise CanvasOverflow("footprint leaves the canvas")
    if j1 < j0 or i1 < i0:
        return 0
    jj, ii = np.meshgrid(np.arange(j0, j1 + 1), np.arange(i0, i1 + 1))
    vx = canvas.origin[0] + jj * canvas.scale - p0[0]
    vy = canvas.origin[1] + ii * canvas.scale - p0[1]
    M = np.outer(major, major) / (A * A) + np.outer(minor, minor) / (B * B)
    delta = p1 - p0
    dMd = float(delta @ M @ delta)
    if dMd > 0:
        Md = M @ delta
        s = np.clip((vx * Md[0] + vy * Md[1]) / dMd, 0.0, 1.0)
        vx = vx - s * delta[0]
        vy = vy - s * delta[1]
    q = M[0, 0] * vx * vx + 2.0 * M[0, 1] * vx * vy + M[1, 1] * vy * vy
    inside = q <= 1.0
    region = canvas.pixels[i0:i1 + 1, j0:j1 + 1]
    fresh = int(np.count_nonzero(inside & (region != INK)))
    region[inside] = INK
    return fresh


def _motion_tangents(states: np.ndarray) -> np.ndarray:
    """Direction of travel per sample; stationary samples borrow the previous (else next) moving one."""
    delta = np.diff(states[:, :2], axis=0)
    delta = np.vstack([delta, delta[-1:]]) if len(delta) else np.zeros((1, 2))
    norm = np.hypot(delta[:, 0], delta[:, 1])
    out = np.tile([1.0, 0.0], (len(delta), 1))
    moving = np.flatnonzero(norm > 0)
    if len(moving) == 0:
        return out
    last = moving[0]
    for t in range(len(delta)):
        if norm[t] > 0:
            last = t
        out[t] = delta[last] / norm[last]
    return out


def execute(plan: Plan, truth: GroundTruth, tip0: ToolTipState, canvas: Canvas, dt: float,
            rng: np.random.Generator | None = None) -> Execution:
    """Replay ``plan`` open loop on the true system; returns a new canvas and true traces.

    ``tip0`` supplies the true starting geometry; its wear gain is replaced by
    ``truth.kd``. Force noise is drawn from ``rng`` (default: seeded from
    ``truth.seed``).
    """
    if rng is None:
        rng = np.random.default_rng(truth.seed)
    out = canvas.copy()
    X = rollout_states(plan.predicted_states[0], plan.inputs, dt)
    z_ref = truth.surface.heights_at(X[:, 0], X[:, 1])
    rel = X[:, 2] - z_ref
    contact = rel < 0
    F = np.where(contact, truth.force_law(rel), 0.0)
    if truth.noise_sd > 0:
        F = np.where(contact, np.maximum(F + rng.normal(0.0, truth.noise_sd, len(F)), 0.0), 0.0)
    tangents = _motion_tangents(X)
    tip = replace(tip0, kd=truth.kd)
    offsets = np.empty(len(X))
    n = len(X) - 1
    for t in range(n + 1):
        offsets[t] = tip.d
        if contact[t]:
            end = X[t + 1, :2] if t < n else None
            stamp_segment(out, tip, X[t, 3], tangents[t], X[t, :2], end)
        if t < n:
            step_len = float(math.hypot(X[t + 1, 0] - X[t, 0], X[t + 1, 1] - X[t, 1]))
            tip = replace(tip, d=min(tip.d + tip.kd * F[t] * step_len, tip.d_max))
    return Execution(out, X, offsets, F, z_ref, tip)


def write_trace(execution: Execution, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "x", "y", "z", "psi", "F_true", "d_true"])
        for t, (s, f, d) in enumerate(zip(execution.states, execution.forces, execution.offsets)):
            writer.writerow([t, *(repr(float(v)) for v in s), repr(float(f)), repr(float(d))])


def read_trace(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """States, forces and offsets from a trace CSV."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    states = np.array([[float(r[k]) for k in ("x", "y", "z", "psi")] for r in rows])
    return states, np.array([float(r["F_true"]) for r in rows]), np.array([float(r["d_true"]) for r in rows])


_META = re.compile(r"#\s*scale=(\S+)\s+origin=(\S+),(\S+)")


def write_canvas(canvas: Canvas, path) -> None:
    """Plain (ASCII, P2) PGM with max value 255; scale/origin kept in a comment line."""
    h, w = canvas.shape
    lines = ["P2", f"# scale={canvas.scale!r} origin={canvas.origin[0]!r},{canvas.origin[1]!r}",
             f"{w} {h}", "255"]
    lines.extend(" ".join(str(int(v)) for v in row) for row in canvas.pixels)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_canvas(path) -> Canvas:
    scale, origin = DEFAULT_SCALE, (0.0, 0.0)
    tokens: list[str] = []
    with open(path) as fh:
        for line in fh:
            if line.startswith("#"):
                m = _META.match(line)
                if m:
                    scale = float(m.group(1))
                    origin = (float(m.group(2)), float(m.group(3)))
                continue
            tokens.extend(line.split("#", 1)[0].split())
    if not tokens or tokens[0] != "P2":
        raise ValueError("not a plain PGM (P2) file")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    body = np.array([int(v) for v in tokens[4:4 + w * h]], dtype=np.int64)
    if len(body) != w * h:
        raise ValueError("truncated PGM body")
    if maxval != 255:
        body = np.rint(body * 255.0 / maxval).astype(np.int64)
    return Canvas(body.reshape(h, w).astype(np.uint8), scale, origin)
