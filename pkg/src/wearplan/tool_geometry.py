"""Conical tip cut by a tilted plane: footprint axes, wear, and deposition width.

The tip is a cone ``z = m * r`` with its apex at the origin; the work surface
is the plane ``z = a * x + d`` with ``a = tan(gamma)``. The plane offset ``d``
grows as the tip wears.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import DegenerateTip, InvalidTip

WIDTH_VARIANTS = ("cos_major", "sin_major", "support")


@dataclass(frozen=True)
class ToolTipState:
    """Tip geometry and wear state.

    Attributes:
        m: cone slope (dimensionless).
        a: plane slope, ``tan(gamma)``.
        d: plane offset from the apex in meters.
        kd: wear gain in meters per newton-meter of travel.
        d_max: offset at which the plane reaches the top of the cone.
    """

    m: float
    a: float
    d: float
    kd: float = 0.0
    d_max: float = math.inf

    def __post_init__(self):
        if not self.m > 0:
            raise InvalidTip("cone slope m must be positive")
        if not abs(self.a) < abs(self.m):
            raise InvalidTip("plane slope must be shallower than the cone (|a| < |m|)")
        if not 0 <= self.d <= self.d_max:
            raise InvalidTip(f"offset d={self.d} outside [0, d_max={self.d_max}]")
        if not self.kd >= 0:
            raise InvalidTip("wear gain must be nonnegative")

    @classmethod
    def from_tilt(cls, m: float, gamma_deg: float, d: float, kd: float = 0.0,
                  d_max: float = math.inf) -> ToolTipState:
        return cls(m=m, a=math.tan(math.radians(gamma_deg)), d=d, kd=kd, d_max=d_max)

    @property
    def gamma(self) -> float:
        return math.atan(self.a)

    def with_offset(self, d: float) -> ToolTipState:
        return replace(self, d=min(max(d, 0.0), self.d_max))


@dataclass(frozen=True)
class EllipseAxes:
    alpha: float
    beta: float


def axis_rates(m: float, a: float) -> tuple[float, float]:
    """Major and minor axis lengths per meter of plane offset."""
    if a == 0:
        # both closed forms reduce to 2/m but round differently
        return 2.0 / m, 2.0 / m
    k = m * m - a * a
    rb = 2.0 / math.sqrt(k)
    # the ratio m*sqrt(1+a^2)/sqrt(k) is >= 1; clamp so rounding cannot flip the axes
    return rb * max(m * math.sqrt(1.0 + a * a) / math.sqrt(k), 1.0), rb


def axes(tip: ToolTipState) -> EllipseAxes:
    if tip.d == 0:
        raise DegenerateTip("zero plane offset gives a zero-area footprint")
    ra, rb = axis_rates(tip.m, tip.a)
    return EllipseAxes(ra * tip.d, rb * tip.d)


def center_offset(tip: ToolTipState) -> float:
    """In-plane distance from the tool-axis piercing point to the footprint center.

    The center sits at ``a*d / (m^2 - a^2)`` in cone-frame coordinates; the
    factor ``sqrt(1 + a^2)`` carries that length into the tilted plane.
    """
    return tip.a * tip.d * math.sqrt(1.0 + tip.a * tip.a) / (tip.m * tip.m - tip.a * tip.a)


def ellipse_implicit(tip: ToolTipState, u, v):
    """Cone/plane intersection equation evaluated at in-plane points, minus one.

    ``u`` runs along the tilt (major) direction and ``v`` along the minor one,
    both measured from where the tool axis pierces the surface. Negative means
    inside the footprint.
    """
    m, a, d = tip.m, tip.a, tip.d
    k = m * m - a * a
    x = np.asarray(u, dtype=float) / math.sqrt(1.0 + a * a)
    y = np.asarray(v, dtype=float)
    return k * k * (x + a * d / (a * a - m * m)) ** 2 / (m * m * d * d) + k * y * y / (d * d) - 1.0


def degrade(tip: ToolTipState, force: float, step_len: float) -> ToolTipState:
    if force < 0 or step_len < 0:
        raise ValueError("force and step length must be nonnegative")
    return replace(tip, d=min(tip.d + tip.kd * force * step_len, tip.d_max))


def _projections(alpha, beta, psi, variant: str):
    """The two terms whose maximum is the width.

    ``support`` is the exact extent of the ellipse along the normal, written
    as ``max(sqrt(p^2 + q^2), 0)`` so all variants share one interface.
    """
    c, s = np.abs(np.cos(psi)), np.abs(np.sin(psi))
    if variant == "support":
        return np.hypot(alpha * c, beta * s), np.zeros_like(np.asarray(psi, dtype=float))
    if variant == "cos_major":
        return alpha * c, beta * s
    if variant == "sin_major":
        return alpha * s, beta * c
    raise ValueError(f"unknown width variant {variant!r}; expected one of {WIDTH_VARIANTS}")


def deposition_width(ax: EllipseAxes, psi, variant: str = "cos_major"):
    """Larger of the two axis projections onto the stroke normal."""
    p, q = _projections(ax.alpha, ax.beta, psi, variant)
    return np.maximum(p, q)


def smooth_max(p, q, kappa: float):
    """``kappa * log(exp(p/kappa) + exp(q/kappa))``, evaluated without overflow."""
    hi = np.maximum(p, q)
    return hi + kappa * np.log1p(np.exp(-np.abs(p - q) / kappa))


def smooth_deposition_width(ax: EllipseAxes, psi, kappa: float, variant: str = "cos_major"):
    if not kappa > 0:
        raise ValueError("kappa must be positive")
    p, q = _projections(ax.alpha, ax.beta, psi, variant)
    return smooth_max(p, q, kappa)
