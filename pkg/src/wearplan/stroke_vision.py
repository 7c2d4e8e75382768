"""Width measurement on a stroke raster and the width-tracking error metric."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import EmptyMask, LengthMismatch
from .ref_stroke import ReferenceStroke

# clockwise from west, as (row, col) offsets
_MOORE = ((0, -1), (-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1))
_DIR = {off: k for k, off in enumerate(_MOORE)}


@dataclass(frozen=True, eq=False)
class WidthProfile:
    widths: np.ndarray  # meters; NaN where invalid
    valid: np.ndarray   # bool

    def __post_init__(self):
        w = np.array(self.widths, dtype=float).reshape(-1)
        v = np.array(self.valid, dtype=bool).reshape(-1)
        if w.shape != v.shape:
            raise LengthMismatch("widths and validity flags differ in length")
        w = np.where(v, w, np.nan)
        object.__setattr__(self, "widths", w)
        object.__setattr__(self, "valid", v)

    def __len__(self) -> int:
        return len(self.widths)


def threshold(pixels, level: int) -> np.ndarray:
    """Boolean mask of pixels at or above ``level``."""
    arr = pixels.pixels if hasattr(pixels, "pixels") else np.asarray(pixels)
    return np.asarray(arr, dtype=np.int64) >= level


def _trace(mask: np.ndarray, start: tuple[int, int]) -> np.ndarray:
    h, w = mask.shape

    def filled(r, c):
        return 0 <= r < h and 0 <= c < w and mask[r, c]

    contour = [start]
    cur = start
    back = 0  # west neighbor of the raster-first pixel is always background
    first_move = None
    while True:
        for k in range(1, 9):
            d = (back + k) % 8
            r, c = cur[0] + _MOORE[d][0], cur[1] + _MOORE[d][1]
            if filled(r, c):
                pr, pc = cur[0] + _MOORE[(d - 1) % 8][0], cur[1] + _MOORE[(d - 1) % 8][1]
                nxt = (r, c)
                break
        else:
            return np.array(contour)  # isolated pixel
        move = (cur, nxt)
        if first_move is None:
            first_move = move
        elif move == first_move:
            break
        back = _DIR[(pr - nxt[0], pc - nxt[1])]
        cur = nxt
        contour.append(cur)
    return np.array(contour[:-1]) if len(contour) > 1 and contour[-1] == start else np.array(contour)


def extract_contour(mask) -> list[np.ndarray]:
    """Outer boundary of each 8-connected component by Moore-neighbor tracing.

    Each contour is an ``(K, 2)`` array of ``(row, col)`` pixels in clockwise
    order starting at the component's first pixel in raster order.
    """
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise EmptyMask("nothing to trace")
    labels, count = ndimage.label(mask, structure=np.ones((3, 3), dtype=int))
    contours = []
    for lab in range(1, count + 1):
        comp = labels == lab
        rows, cols = np.nonzero(comp)
        start = (int(rows[0]), int(cols[0]))
        contours.append(_trace(comp, start))
    return contours


def _geometry(canvas_geometry):
    if hasattr(canvas_geometry, "scale"):
        return float(canvas_geometry.scale), canvas_geometry.origin
    scale, origin = canvas_geometry
    return float(scale), (float(origin[0]), float(origin[1]))


def width_profile(mask, stroke: ReferenceStroke, canvas_geometry, search: float | None = None) -> WidthProfile:
    """Width along the normal scanline through each reference sample.

    The scanline is sampled at one-pixel spacing within ``search`` meters on
    either side (default 1.5x the largest reference width). The width is the
    length of the run of inked samples containing the reference point, or of
    the run nearest to it; samples whose scanline meets no ink are invalid.
    """
    mask = np.asarray(mask, dtype=bool)
    scale, origin = _geometry(canvas_geometry)
    if search is None:
        search = 1.5 * float(np.max(stroke.widths))
    k = int(math.ceil(search / scale))
    offsets = np.arange(-k, k + 1) * scale
    _, normals = stroke.frames()
    h, w = mask.shape
    widths = np.zeros(stroke.horizon + 1)
    valid = np.zeros(stroke.horizon + 1, dtype=bool)
    for t, ((x, y), n) in enumerate(zip(stroke.xy, normals)):
        cols = np.rint((x + offsets * n[0] - origin[0]) / scale).astype(int)
        rows = np.rint((y + offsets * n[1] - origin[1]) / scale).astype(int)
        inside = (cols >= 0) & (cols < w) & (rows >= 0) & (rows < h)
        hits = np.zeros(len(offsets), dtype=bool)
        hits[inside] = mask[rows[inside], cols[inside]]
        on = np.flatnonzero(hits)
        if len(on) == 0:
            continue
        seed = on[np.argmin(np.abs(on - k))]
        lo = seed
        while lo > 0 and hits[lo - 1]:
            lo -= 1
        hi = seed
        while hi < len(hits) - 1 and hits[hi + 1]:
            hi += 1
        widths[t] = (hi - lo + 1) * scale
        valid[t] = True
    return WidthProfile(widths, valid)


def error_metric(profile: WidthProfile, stroke: ReferenceStroke) -> float:
    """Sum of absolute width errors; a sample with no deposit counts its full reference width."""
    if len(profile) != len(stroke.widths):
        raise LengthMismatch(f"{len(profile)} measurements for {len(stroke.widths)} samples")
    err = np.where(profile.valid, np.abs(np.nan_to_num(profile.widths) - stroke.widths), stroke.widths)
    return float(np.sum(err))


def write_profile(profile: WidthProfile, stroke: ReferenceStroke, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "w_ref_m", "w_a_m", "valid"])
        for t, (wr, wa, ok) in enumerate(zip(stroke.widths, profile.widths, profile.valid)):
            writer.writerow([t, repr(float(wr)), repr(float(wa)) if ok else "", int(ok)])


def read_profile(path) -> WidthProfile:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    valid = [r["valid"] == "1" for r in rows]
    widths = [float(r["w_a_m"]) if ok else math.nan for r, ok in zip(rows, valid)]
    return WidthProfile(widths, valid)


def write_summary(path, **fields) -> None:
    with open(path, "w") as fh:
        json.dump(fields, fh, indent=2, sort_keys=True)
        fh.write("\n")
