"""Batch open-loop stroke planning by single shooting.

The decision variable is the whole input sequence ``U`` of shape ``(N, 4)``.
States follow the single integrator; contact force drives tip wear, and the
deposited width comes from the wear state and heading. The objective is the
quadratic tracking cost on ``(x, y, W)`` with the width max replaced by a
log-sum-exp surrogate so the descent sees a smooth function.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import InfeasibleStart, LengthMismatch
from .force_model import ForceModelParams, SurfaceMap
from .kinematics import (BoxConstraints, EndEffectorState, InputSample, restore_feasibility,
                         rollout_states, state_feasible, track_states)
from .ref_stroke import ReferenceStroke
from .tool_geometry import ToolTipState, axis_rates, smooth_max

DEFAULT_Q = np.diag([1e6, 1e6, 1e8])


@dataclass(frozen=True, eq=False)
class PlannerConfig:
    Q: np.ndarray = field(default_factory=lambda: DEFAULT_Q.copy())
    kappa: float = 1e-6
    max_iterations: int = 400
    step_tolerance: float = 1e-10
    restarts: int = 2
    seed: int = 0
    nominal_depth: float = 5e-4
    min_depth: float | None = 5e-5
    width_variant: str = "support"
    psi_perturbation: float = 0.6
    depth_perturbation: float = 3e-4

    def __post_init__(self):
        Q = np.array(self.Q, dtype=float)
        if Q.shape != (3, 3) or not np.allclose(Q, Q.T):
            raise ValueError("Q must be a symmetric 3x3 matrix")
        if np.linalg.eigvalsh(Q).min() <= 0:
            raise ValueError("Q must be positive definite")
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.restarts < 0:
            raise ValueError("restarts must be >= 0")
        if self.min_depth is not None and self.min_depth > self.nominal_depth:
            raise ValueError("min_depth must not exceed nominal_depth")
        Q.flags.writeable = False
        object.__setattr__(self, "Q", Q)


class Rollout(NamedTuple):
    states: np.ndarray   # (N+1, 4)
    offsets: np.ndarray  # (N+1,) plane offset d(t)
    forces: np.ndarray   # (N+1,) model contact force
    widths: np.ndarray   # (N+1,) exact deposition width


@dataclass(frozen=True, eq=False)
class Plan:
    inputs: np.ndarray
    predicted_states: np.ndarray
    predicted_widths: np.ndarray
    predicted_cost: float
    predicted_offsets: np.ndarray | None = None
    warm_start_cost: float = float("nan")
    iterations: int = 0

    @property
    def horizon(self) -> int:
        return len(self.inputs)

    @property
    def input_samples(self) -> list[InputSample]:
        return [InputSample.from_array(u) for u in self.inputs]

    @property
    def state_samples(self) -> list[EndEffectorState]:
        return [EndEffectorState.from_array(s) for s in self.predicted_states]


def _width_terms(d, psi, ra, rb, variant):
    c, s = np.cos(psi), np.sin(psi)
    if variant == "cos_major":
        p_unit, q_unit = ra * np.abs(c), rb * np.abs(s)
        dp_dpsi, dq_dpsi = -ra * np.sign(c) * s, rb * np.sign(s) * c
    elif variant == "sin_major":
        p_unit, q_unit = ra * np.abs(s), rb * np.abs(c)
        dp_dpsi, dq_dpsi = ra * np.sign(s) * c, -rb * np.sign(c) * s
    elif variant == "support":
        p_unit = np.hypot(ra * c, rb * s)
        q_unit = np.zeros_like(p_unit)
        dp_dpsi, dq_dpsi = (rb * rb - ra * ra) * s * c / p_unit, q_unit
    else:
        raise ValueError(f"unknown width variant {variant!r}")
    return p_unit, q_unit, dp_dpsi, dq_dpsi


def rollout(initial, tip0: ToolTipState, inputs, params: ForceModelParams, surface: SurfaceMap,
            dt: float, z_ref=None, variant: str = "cos_major") -> Rollout:
    """Forward-simulate integrator, force map, wear law, footprint axes and exact width.

    ``z_ref`` overrides the surface lookup at the simulated positions. Samples
    out of contact get zero force and zero width.
    """
    x0 = initial.as_array() if isinstance(initial, EndEffectorState) else np.asarray(initial, float)
    inputs = np.asarray(inputs, dtype=float).reshape(-1, 4)
    X = rollout_states(x0, inputs, dt)
    if z_ref is None:
        z_ref = surface.heights_at(X[:, 0], X[:, 1])
    rel = X[:, 2] - np.asarray(z_ref, dtype=float)
    contact = rel < 0
    F = np.where(contact, np.maximum(params.theta * rel + params.theta0, 0.0), 0.0)
    steps = np.hypot(np.diff(X[:, 0]), np.diff(X[:, 1]))
    exposure = np.concatenate([[0.0], np.cumsum(F[:-1] * steps)])
    d = np.minimum(tip0.d + tip0.kd * exposure, tip0.d_max)
    ra, rb = axis_rates(tip0.m, tip0.a)
    p_unit, q_unit, _, _ = _width_terms(d, X[:, 3], ra, rb, variant)
    W = np.where(contact, np.maximum(p_unit * d, q_unit * d), 0.0)
    return Rollout(X, d, F, W)


def cost(states, widths, stroke: ReferenceStroke, Q) -> float:
    """Quadratic tracking cost summed over all ``N + 1`` samples of ``(x, y, W)``."""
    states = np.asarray(states, dtype=float).reshape(-1, 4)
    widths = np.asarray(widths, dtype=float).reshape(-1)
    if len(states) != len(stroke.widths) or len(widths) != len(stroke.widths):
        raise LengthMismatch("states/widths must have N + 1 samples")
    err = np.column_stack([states[:, :2] - stroke.xy, widths - stroke.widths])
    return float(np.einsum("ti,ij,tj->", err, np.asarray(Q, dtype=float), err))


class SmoothObjective:
    """Smoothed tracking cost and its exact gradient with respect to the inputs."""

    def __init__(self, stroke: ReferenceStroke, initial, tip0: ToolTipState, params: ForceModelParams,
                 surface: SurfaceMap, Q, kappa: float, variant: str = "cos_major"):
        self.stroke = stroke
        self.x0 = initial.as_array() if isinstance(initial, EndEffectorState) else np.asarray(initial, float)
        self.tip0 = tip0
        self.params = params
        self.Q = np.asarray(Q, dtype=float)
        self.kappa = kappa
        self.variant = variant
        self.dt = stroke.dt
        self.z_ref = surface.heights_at(stroke.xy[:, 0], stroke.xy[:, 1])
        self.ra, self.rb = axis_rates(tip0.m, tip0.a)

    def __call__(self, U) -> float:
        return self.value_and_grad(U, need_grad=False)[0]

    def gradient(self, U) -> np.ndarray:
        return self.value_and_grad(U)[1]

    def value_and_grad(self, U, need_grad: bool = True):
        U = np.asarray(U, dtype=float).reshape(-1, 4)
        dt, tip, th = self.dt, self.tip0, self.params
        X = rollout_states(self.x0, U, dt)
        rel = X[:, 2] - self.z_ref
        contact = rel < 0
        lin = th.theta * rel + th.theta0
        F = np.where(contact, np.maximum(lin, 0.0), 0.0)
        delta = np.diff(X[:, :2], axis=0)
        steps = np.hypot(delta[:, 0], delta[:, 1])
        exposure = np.concatenate([[0.0], np.cumsum(F[:-1] * steps)])
        raw_d = tip.d + tip.kd * exposure
        unsat = raw_d < tip.d_max
        d = np.where(unsat, raw_d, tip.d_max)
        psi = X[:, 3]
        p_unit, q_unit, dp_dpsi, dq_dpsi = _width_terms(d, psi, self.ra, self.rb, self.variant)
        p, q = p_unit * d, q_unit * d
        W = np.where(contact, smooth_max(p, q, self.kappa), 0.0)
        err = np.column_stack([X[:, :2] - self.stroke.xy, W - self.stroke.widths])
        Qe = err @ self.Q
        J = float(np.sum(Qe * err))
        if not need_grad:
            return J, None

        gE = 2.0 * Qe
        gX = np.zeros_like(X)
        gX[:, :2] = gE[:, :2]
        gW = np.where(contact, gE[:, 2], 0.0)
        # weight of p in the soft max: 1 / (1 + exp((q - p) / kappa))
        wp = 0.5 * (1.0 + np.tanh((p - q) / (2.0 * self.kappa)))
        wq = 1.0 - wp
        gX[:, 3] += gW * d * (wp * dp_dpsi + wq * dq_dpsi)
        gd = gW * (wp * p_unit + wq * q_unit) * unsat
        # d(t) depends on increments k < t
        g_inc = np.cumsum(gd[::-1])[::-1][1:]
        gF = g_inc * tip.kd * steps
        gstep = g_inc * tip.kd * F[:-1]
        dF_dz = np.where(contact & (lin > 0), th.theta, 0.0)[:-1]
        gX[:-1, 2] += gF * dF_dz
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = np.where(steps[:, None] > 0, delta / steps[:, None], 0.0)
        gX[1:, :2] += gstep[:, None] * unit
        gX[:-1, :2] -= gstep[:, None] * unit
        # X[t] = x0 + dt * sum_{k<t} U[k]
        gU = dt * np.cumsum(gX[:0:-1], axis=0)[::-1]
        return J, gU


def contact_bound(stroke: ReferenceStroke, surface: SurfaceMap, min_depth: float | None) -> np.ndarray | None:
    """Per-step upper state bounds keeping the tool ``min_depth`` below the mapped surface."""
    if min_depth is None:
        return None
    upper = np.full((stroke.horizon + 1, 4), np.inf)
    upper[:, 2] = surface.heights_at(stroke.xy[:, 0], stroke.xy[:, 1]) - min_depth
    return upper


def warm_start(stroke: ReferenceStroke, initial, surface: SurfaceMap, nominal_depth: float,
               constraints: BoxConstraints | None = None, state_upper=None) -> np.ndarray:
    """Inputs that follow the reference path at a constant depth below the surface, heading fixed."""
    x = initial.as_array() if isinstance(initial, EndEffectorState) else np.array(initial, float)
    dt = stroke.dt
    z_ref = surface.heights_at(stroke.xy[:, 0], stroke.xy[:, 1])
    U = np.zeros((stroke.horizon, 4))
    for t in range(stroke.horizon):
        target = np.array([stroke.xy[t + 1, 0], stroke.xy[t + 1, 1], z_ref[t + 1] - nominal_depth, x[3]])
        U[t] = (target - x) / dt
        x = x + dt * U[t]
    if constraints is not None:
        U = restore_feasibility(initial, U, dt, constraints, state_upper)
    return U


def _spg(objective: SmoothObjective, U0, project, track, scale, max_iterations, tol):
    """Projected gradient with Barzilai-Borwein steps and Armijo backtracking (monotone).

    Steps are taken in state coordinates ``Z = X[1:]``: inputs act on the
    cost only through running sums, so the raw input gradient is badly scaled
    along the horizon. ``track`` turns trial states into feasible inputs.
    """
    x0, dt = objective.x0, objective.dt

    def evaluate(U):
        J, gU = objective.value_and_grad(U)
        # gU[k] = dt * sum_{t > k} gX[t]  =>  gX[k + 1] = (gU[k] - gU[k + 1]) / dt
        gZ = (gU - np.vstack([gU[1:], np.zeros((1, 4))])) / dt
        return J, gZ

    U = project(U0)
    Z = rollout_states(x0, U, dt)[1:]
    J, g = evaluate(U)
    step = None
    it = 0
    for it in range(1, max_iterations + 1):
        sg = g * scale * scale
        if step is None:
            gnorm = np.sqrt(np.sum((g * scale) ** 2))
            if gnorm == 0:
                break
            step = 1e-2 / gnorm
        accepted = False
        for _ in range(40):
            trial_U = track(Z - step * sg)
            trial = rollout_states(x0, trial_U, dt)[1:]
            Jt, gt = evaluate(trial_U)
            decrease = float(np.sum(g * (Z - trial)))
            if Jt <= J - 1e-4 * decrease and Jt < J:
                accepted = True
                break
            step *= 0.25
        if not accepted:
            break
        s = (trial - Z) / scale
        y = (gt - g) * scale
        sy = float(np.sum(s * y))
        rel_drop = (J - Jt) / max(abs(J), 1e-300)
        U, Z, J, g = trial_U, trial, Jt, gt
        if rel_drop < tol:
            break
        step = float(np.sum(s * s)) / sy if sy > 0 else step * 4.0
        step = min(max(step, 1e-12), 1e12)
    return U, J, it


def _input_scale(constraints: BoxConstraints, n: int) -> np.ndarray:
    span = constraints.input_upper - constraints.input_lower
    defaults = np.array([0.05, 0.05, 0.05, 5.0])
    scale = np.where(np.isfinite(span) & (span > 0), 0.5 * span, defaults)
    return np.broadcast_to(scale, (n, 4))


def _heading_ramp(offset: float, n: int, dt: float, constraints: BoxConstraints) -> np.ndarray:
    """Heading rates that turn by ``offset`` as fast as the rate box allows."""
    rate = min(constraints.input_upper[3], -constraints.input_lower[3], 0.25 * np.pi / dt)
    rates = np.zeros(n)
    if offset == 0 or not rate > 0:
        return rates
    k = min(n, int(np.ceil(abs(offset) / (rate * dt))))
    rates[:k] = offset / (k * dt)
    return rates


def plan_stroke(stroke: ReferenceStroke, initial, tip0: ToolTipState, params: ForceModelParams,
                surface: SurfaceMap, constraints: BoxConstraints, cfg: PlannerConfig = PlannerConfig()) -> Plan:
    """Solve the finite-horizon tracking problem once for the whole stroke.

    Besides the box constraints, each planned state stays at least
    ``cfg.min_depth`` below the surface map at the reference point, so the
    stroke is drawn in contact throughout.

    Restart 0 starts from the kinematic warm start. Restart ``r`` first turns
    the heading by ``r/restarts`` of a quarter turn, as fast as the rate box
    allows, then adds seeded noise to the heading and depth. The candidate with
    the lowest exact cost wins, ties going to the earlier restart, and the
    warm start itself is returned if nothing beats it.
    """
    x0 = initial.as_array() if isinstance(initial, EndEffectorState) else np.asarray(initial, float)
    if not state_feasible(x0, constraints):
        raise InfeasibleStart(f"initial state {x0} violates the state box")
    dt = stroke.dt
    N = stroke.horizon
    z_ref = surface.heights_at(stroke.xy[:, 0], stroke.xy[:, 1])

    def exact(U):
        r = rollout(x0, tip0, U, params, surface, dt, z_ref=z_ref, variant=cfg.width_variant)
        return r, cost(r.states, r.widths, stroke, cfg.Q)

    z_cap = contact_bound(stroke, surface, cfg.min_depth)
    U_warm = warm_start(stroke, x0, surface, cfg.nominal_depth, constraints, z_cap)
    warm_roll, warm_cost = exact(U_warm)
    if N == 0:
        return Plan(U_warm, warm_roll.states, warm_roll.widths, warm_cost, warm_roll.offsets, warm_cost, 0)

    def project(U):
        return restore_feasibility(x0, U, dt, constraints, z_cap)

    def track(Z):
        return track_states(x0, Z, dt, constraints, z_cap)

    objective = SmoothObjective(stroke, x0, tip0, params, surface, cfg.Q, cfg.kappa, cfg.width_variant)
    scale = dt * _input_scale(constraints, N)
    rng = np.random.default_rng(cfg.seed)
    best_U, best_roll, best_cost, best_iters = U_warm, warm_roll, warm_cost, 0
    for r in range(cfg.restarts + 1):
        start = U_warm.copy()
        if r > 0:
            # turn to an evenly spread heading offset, then random-walk around it;
            # the depth gets a seeded offset
            start[:, 3] += _heading_ramp(0.5 * np.pi * r / cfg.restarts, N, dt, constraints)
            start[:, 3] += rng.normal(0.0, cfg.psi_perturbation, N) / (dt * np.sqrt(N))
            bump = rng.normal(0.0, cfg.depth_perturbation)
            start[0, 2] -= bump / dt
        U, _, iters = _spg(objective, start, project, track, scale, cfg.max_iterations, cfg.step_tolerance)
        roll, c = exact(U)
        if c < best_cost:
            best_U, best_roll, best_cost, best_iters = U, roll, c, iters
    return Plan(best_U, best_roll.states, best_roll.widths, best_cost, best_roll.offsets, warm_cost, best_iters)


def write_plan(plan: Plan, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "vx", "vy", "vz", "wpsi", "x", "y", "z", "psi", "w_pred"])
        for t, (s, w) in enumerate(zip(plan.predicted_states, plan.predicted_widths)):
            u = [repr(float(v)) for v in plan.inputs[t]] if t < plan.horizon else ["", "", "", ""]
            writer.writerow([t, *u, *(repr(float(v)) for v in s), repr(float(w))])


def read_plan(path) -> Plan:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    states = np.array([[float(r[k]) for k in ("x", "y", "z", "psi")] for r in rows])
    widths = np.array([float(r["w_pred"]) for r in rows])
    inputs = np.array([[float(r[k]) for k in ("vx", "vy", "vz", "wpsi")] for r in rows[:-1]]).reshape(-1, 4)
    return Plan(inputs, states, widths, float("nan"))
