"""Single-integrator end-effector model with box state/input constraints.

State is ``(x, y, z, psi)`` and input is ``(vx, vy, vz, wpsi)``; one step is
``x(t+1) = x(t) + dt * u(t)``. Arrays of states/inputs are ``(..., 4)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InfeasibleStart


@dataclass(frozen=True)
class EndEffectorState:
    x: float
    y: float
    z: float
    psi: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z, self.psi], dtype=float)

    @classmethod
    def from_array(cls, arr) -> EndEffectorState:
        x, y, z, psi = (float(v) for v in arr)
        return cls(x, y, z, psi)


@dataclass(frozen=True)
class InputSample:
    vx: float
    vy: float
    vz: float
    wpsi: float

    def as_array(self) -> np.ndarray:
        return np.array([self.vx, self.vy, self.vz, self.wpsi], dtype=float)

    @classmethod
    def from_array(cls, arr) -> InputSample:
        vx, vy, vz, w = (float(v) for v in arr)
        return cls(vx, vy, vz, w)


@dataclass(frozen=True, eq=False)
class BoxConstraints:
    state_lower: np.ndarray
    state_upper: np.ndarray
    input_lower: np.ndarray
    input_upper: np.ndarray

    def __post_init__(self):
        for name in ("state_lower", "state_upper", "input_lower", "input_upper"):
            arr = np.array(getattr(self, name), dtype=float).reshape(4)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if np.any(self.state_lower > self.state_upper) or np.any(self.input_lower > self.input_upper):
            raise ConfigError("box lower bounds must not exceed upper bounds")

    @classmethod
    def unbounded(cls) -> BoxConstraints:
        inf = np.full(4, np.inf)
        return cls(-inf, inf, -inf, inf)


def _as_vec(v) -> np.ndarray:
    if isinstance(v, (EndEffectorState, InputSample)):
        return v.as_array()
    return np.asarray(v, dtype=float)


def step(state, u, dt: float) -> EndEffectorState:
    if not dt > 0:
        raise ValueError("dt must be positive")
    return EndEffectorState.from_array(_as_vec(state) + dt * _as_vec(u))


def check_feasible(state, u, constraints: BoxConstraints) -> bool:
    s, v = _as_vec(state), _as_vec(u)
    return bool(
        np.all(s >= constraints.state_lower) and np.all(s <= constraints.state_upper)
        and np.all(v >= constraints.input_lower) and np.all(v <= constraints.input_upper)
    )


def state_feasible(state, constraints: BoxConstraints) -> bool:
    s = _as_vec(state)
    return bool(np.all(s >= constraints.state_lower) and np.all(s <= constraints.state_upper))


def rollout_states(x0, inputs, dt: float) -> np.ndarray:
    """States ``(N + 1, 4)`` from ``x0`` under ``inputs`` ``(N, 4)``.

    Accumulates left to right, so the result is bit-identical to repeated
    :func:`step` calls.
    """
    inputs = np.asarray(inputs, dtype=float).reshape(-1, 4)
    increments = np.vstack([_as_vec(x0)[None, :], dt * inputs])
    return np.cumsum(increments, axis=0)


def _step_bounds(x0, n, constraints: BoxConstraints, state_upper, state_lower):
    x = _as_vec(x0).copy()
    if not state_feasible(x, constraints):
        raise InfeasibleStart(f"initial state {x} violates the state box")
    upper = np.broadcast_to(constraints.state_upper, (n + 1, 4))
    lower = np.broadcast_to(constraints.state_lower, (n + 1, 4))
    if state_upper is not None:
        upper = np.minimum(upper, state_upper)
    if state_lower is not None:
        lower = np.maximum(lower, state_lower)
    return x, lower, upper


def _forward_clip(x, raw, dt, constraints: BoxConstraints, lower, upper, track: bool) -> np.ndarray:
    # channels never interact under box constraints, so each is clipped on its own
    out = np.empty_like(raw)
    for k in range(4):
        lo_u, hi_u = float(constraints.input_lower[k]), float(constraints.input_upper[k])
        lo_x, hi_x = lower[1:, k].tolist(), upper[1:, k].tolist()
        xk = float(x[k])
        col = []
        for t, r in enumerate(raw[:, k].tolist()):
            u = (r - xk) / dt if track else r
            nxt = xk + dt * u
            if not (lo_u <= u <= hi_u and lo_x[t] <= nxt <= hi_x[t]):
                lo = max(lo_u, (lo_x[t] - xk) / dt)
                hi = min(hi_u, (hi_x[t] - xk) / dt)
                u = min(max(u, lo), max(lo, hi))
                nxt = xk + dt * u
                # rounding in (bound - x) / dt can land a few ulps outside the state box;
                # a bound out of reach within one step is left to later steps
                for _ in range(8):
                    if not (nxt > hi_x[t] and u > lo_u):
                        break
                    u = math.nextafter(u, -math.inf)
                    nxt = xk + dt * u
                for _ in range(8):
                    if not (nxt < lo_x[t] and u < hi_u):
                        break
                    u = math.nextafter(u, math.inf)
                    nxt = xk + dt * u
            col.append(u)
            xk = nxt
        out[:, k] = col
    return out


def restore_feasibility(x0, inputs, dt: float, constraints: BoxConstraints,
                        state_upper=None, state_lower=None) -> np.ndarray:
    """Map an input sequence into the feasible set by forward clipping.

    Each input is clipped to the intersection of the input box and the set of
    inputs keeping the next state inside the state box. Feasible sequences
    are returned unchanged. ``state_upper``/``state_lower`` optionally give
    per-step ``(N + 1, 4)`` bounds that tighten the box for steps ``t >= 1``.
    """
    inputs = np.array(inputs, dtype=float).reshape(-1, 4)
    x, lower, upper = _step_bounds(x0, len(inputs), constraints, state_upper, state_lower)
    return _forward_clip(x, inputs, dt, constraints, lower, upper, track=False)


def track_states(x0, targets, dt: float, constraints: BoxConstraints,
                 state_upper=None, state_lower=None) -> np.ndarray:
    """Feasible inputs that steer toward ``targets`` ``(N, 4)`` one step at a time.

    Each input aims at the next target from the state actually reached, so a
    rate-limited step delays the approach instead of offsetting every later
    state. Reachable feasible targets are hit up to rounding.
    """
    targets = np.asarray(targets, dtype=float).reshape(-1, 4)
    x, lower, upper = _step_bounds(x0, len(targets), constraints, state_upper, state_lower)
    return _forward_clip(x, targets, dt, constraints, lower, upper, track=True)
