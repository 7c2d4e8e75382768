import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wearplan.errors import InfeasibleStart
from wearplan.force_model import ForceModelParams, SurfaceMap
from wearplan.kinematics import BoxConstraints, check_feasible, rollout_states
from wearplan.planner import (Plan, PlannerConfig, SmoothObjective, cost, plan_stroke, read_plan, rollout,
                              warm_start, write_plan)
from wearplan.ref_stroke import ReferenceStroke, build_polyline_stroke, l_stroke
from wearplan.tool_geometry import ToolTipState, axes, deposition_width

PARAMS = ForceModelParams(-1000.0, 0.05)
SURFACE = SurfaceMap.planar(0.0, 0.01, -0.02)
BOX = BoxConstraints([-0.05, -0.05, -0.01, -math.pi], [0.05, 0.05, 0.01, math.pi],
                     [-0.1, -0.1, -0.05, -10.0], [0.1, 0.1, 0.05, 10.0])
HEAVY_Q = np.diag([1e10, 1e10, 1e8])


def line_stroke(n, width=1e-3, spacing=2e-4, angle=0.0):
    c, s = math.cos(angle), math.sin(angle)
    pts = [(-0.003 + spacing * i * c, spacing * i * s) for i in range(n + 1)]
    return build_polyline_stroke(pts, [width] * (n + 1))


def start_on(stroke, surface=SURFACE, depth=5e-4, psi=0.0):
    x, y = stroke.xy[0]
    return np.array([x, y, float(surface.heights_at(x, y)) - depth, psi])


def test_cost_zero_on_reference():
    s = l_stroke()
    states = np.column_stack([s.xy, np.zeros(len(s.xy)), np.zeros(len(s.xy))])
    assert cost(states, s.widths, s, np.eye(3)) == 0.0


def test_cost_single_offset():
    s = ReferenceStroke([[0.0, 0.0]], [1e-3])
    assert cost([[1e-3, 0.0, 0.0, 0.0]], [1e-3], s, np.eye(3)) == pytest.approx(1e-6, rel=1e-15)


@given(st.floats(1e-3, 1e3))
def test_cost_scales_with_weight(c):
    s = line_stroke(5)
    rng = np.random.default_rng(0)
    states = np.column_stack([s.xy + rng.normal(0, 1e-4, s.xy.shape), np.zeros((6, 2))])
    widths = s.widths + rng.normal(0, 1e-4, 6)
    assert cost(states, widths, s, c * np.diag([1.0, 2.0, 3.0])) == pytest.approx(
        c * cost(states, widths, s, np.diag([1.0, 2.0, 3.0])), rel=1e-12)


def test_rollout_above_surface():
    tip = ToolTipState.from_tilt(5.45, 50.0, 1e-4, kd=0.02)
    r = rollout([0.0, 0.0, 0.01, 0.0], tip, np.zeros((10, 4)), PARAMS, SurfaceMap.flat(), 0.008)
    assert np.all(r.widths == 0)
    assert np.all(r.offsets == tip.d)


def test_rollout_constant_depth_widths_grow():
    tip = ToolTipState.from_tilt(5.45, 50.0, 1e-4, kd=0.02)
    U = np.tile([0.025, 0.0, 0.0, 0.0], (40, 1))
    r = rollout([-0.003, 0.0, -1e-3, 0.0], tip, U, PARAMS, SurfaceMap.flat(), 0.008)
    assert np.all(np.diff(r.widths) > 0)
    ratio = axes(tip).alpha / tip.d
    np.testing.assert_allclose(r.widths, ratio * r.offsets, rtol=1e-12)


def test_rollout_single_step_wear():
    # 1.5 N at 1.45 mm depth, 0.2 mm of travel
    tip = ToolTipState.from_tilt(5.45, 0.0, 1e-4, kd=0.02)
    U = np.array([[2e-4 / 0.008, 0.0, 0.0, 0.0]])
    r = rollout([0.0, 0.0, -1.45e-3, 0.0], tip, U, PARAMS, SurfaceMap.flat(), 0.008)
    assert r.forces[0] == pytest.approx(1.5, rel=1e-12)
    assert r.offsets[1] == pytest.approx(1.06e-4, rel=1e-12)


def _fd_check(obj, U, h=1e-6):
    g = obj.gradient(U)
    fd = np.zeros_like(U)
    for idx in np.ndindex(U.shape):
        e = np.zeros_like(U)
        e[idx] = h
        fd[idx] = (obj(U + e) - obj(U - e)) / (2 * h)
    return np.linalg.norm(g - fd) / np.linalg.norm(fd)


@pytest.mark.parametrize("variant", ["cos_major", "sin_major", "support"])
@pytest.mark.parametrize("seed", range(4))
def test_gradient_matches_finite_differences(variant, seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 11))
    stroke = line_stroke(n, width=3e-4, angle=rng.uniform(0, 2 * math.pi))
    tip = ToolTipState.from_tilt(5.45, 50.0, 2e-4, kd=0.05, d_max=1e-2)
    x0 = start_on(stroke, psi=rng.uniform(0.2, 1.2))
    U = warm_start(stroke, x0, SURFACE, 8e-4)
    U = U + rng.normal(0, [3e-3, 3e-3, 1e-3, 2.0], U.shape)
    obj = SmoothObjective(stroke, x0, tip, PARAMS, SURFACE, np.diag([1e6, 1e6, 1e8]), 1e-6, variant)
    assert _fd_check(obj, U) <= 1e-4


def test_rejects_infeasible_start():
    stroke = line_stroke(5)
    tip = ToolTipState.from_tilt(5.45, 50.0, 1e-4)
    with pytest.raises(InfeasibleStart):
        plan_stroke(stroke, [0.2, 0.0, 0.0, 0.0], tip, PARAMS, SURFACE, BOX)


def _assert_sound(plan, x0, stroke, cfg):
    assert np.array_equal(rollout_states(x0, plan.inputs, stroke.dt), plan.predicted_states)
    for t in range(plan.horizon):
        assert check_feasible(plan.predicted_states[t + 1], plan.inputs[t], BOX)
    assert plan.predicted_cost <= plan.warm_start_cost


@settings(max_examples=8)
@given(st.integers(3, 25), st.floats(0, 2 * math.pi), st.floats(1e-4, 1e-3), st.floats(0, 60),
       st.floats(0, 0.1), st.integers(0, 1000))
def test_plans_are_sound(n, angle, width, gamma, kd, seed):
    stroke = line_stroke(n, width=width, angle=angle)
    tip = ToolTipState.from_tilt(5.45, gamma, 1e-4, kd=kd)
    x0 = start_on(stroke)
    cfg = PlannerConfig(restarts=1, max_iterations=60, seed=seed)
    _assert_sound(plan_stroke(stroke, x0, tip, PARAMS, SURFACE, BOX, cfg), x0, stroke, cfg)


def test_l_stroke_plan_is_sound_and_deterministic():
    stroke = l_stroke()
    tip = ToolTipState.from_tilt(5.45, 50.0, 1e-4, kd=0.02)
    x0 = start_on(stroke, SurfaceMap.flat())
    cfg = PlannerConfig(Q=HEAVY_Q, restarts=2, seed=3)
    a = plan_stroke(stroke, x0, tip, PARAMS, SurfaceMap.flat(), BOX, cfg)
    b = plan_stroke(stroke, x0, tip, PARAMS, SurfaceMap.flat(), BOX, cfg)
    _assert_sound(a, x0, stroke, cfg)
    assert np.array_equal(a.inputs, b.inputs) and a.predicted_cost == b.predicted_cost
    assert a.predicted_cost < a.warm_start_cost


@pytest.mark.parametrize("psi0", [0.6, 0.0])
def test_reachable_constant_width(psi0):
    # a straight line at fixed depth and heading 0.6 rad draws this width exactly
    tip = ToolTipState.from_tilt(5.45, 50.0, 1e-3, kd=0.0)
    target = float(deposition_width(axes(tip), 0.6, "support"))
    stroke = line_stroke(30, width=target)
    surface = SurfaceMap.flat()
    cfg = PlannerConfig(Q=HEAVY_Q)
    plan = plan_stroke(stroke, start_on(stroke, surface, psi=psi0), tip, PARAMS, surface, BOX, cfg)
    pos = np.sum((plan.predicted_states[:, :2] - stroke.xy) ** 2 @ np.diag(HEAVY_Q)[:2])
    assert pos <= 1e-10
    # the heading turns at 10 rad/s at most, so 0.6 rad needs 8 steps
    first = 0 if psi0 == 0.6 else 8
    err = np.abs(plan.predicted_widths - target)[first:]
    assert err.max() <= cfg.kappa * math.log(2) + 1e-9


def test_empty_horizon():
    stroke = ReferenceStroke([[0.0, 0.0]], [1e-3])
    tip = ToolTipState.from_tilt(5.45, 0.0, 1e-4)
    x0 = np.array([1e-4, 0.0, -5e-4, 0.0])
    plan = plan_stroke(stroke, x0, tip, PARAMS, SurfaceMap.flat(), BOX)
    assert plan.inputs.shape == (0, 4)
    w0 = float(deposition_width(axes(tip), 0.0, "support"))
    Q = PlannerConfig().Q
    assert plan.predicted_cost == pytest.approx(Q[0, 0] * 1e-8 + Q[2, 2] * (w0 - 1e-3) ** 2, rel=1e-12)


@given(st.floats(-3, 3))
def test_upright_widths_ignore_heading_rate(w):
    tip = ToolTipState.from_tilt(5.45, 0.0, 1e-4, kd=0.02)
    U = np.tile([0.025, 0.0, 0.0, 0.0], (20, 1))
    base = rollout([-0.003, 0.0, -1e-3, 0.0], tip, U, PARAMS, SurfaceMap.flat(), 0.008, variant="support")
    U[:, 3] = w
    turned = rollout([-0.003, 0.0, -1e-3, 0.0], tip, U, PARAMS, SurfaceMap.flat(), 0.008, variant="support")
    np.testing.assert_allclose(turned.widths, base.widths, rtol=1e-14)


def test_wear_aware_beats_wear_blind_on_true_wear():
    stroke = l_stroke()
    surface = SurfaceMap.flat()
    truth = ToolTipState.from_tilt(5.45, 50.0, 1e-4, kd=0.02)
    x0 = start_on(stroke, surface)
    cfg = PlannerConfig(Q=HEAVY_Q, restarts=2)
    err = {}
    for name, kd in (("aware", 0.02), ("blind", 0.0)):
        plan = plan_stroke(stroke, x0, ToolTipState.from_tilt(5.45, 50.0, 1e-4, kd=kd), PARAMS, surface, BOX, cfg)
        real = rollout(x0, truth, plan.inputs, PARAMS, surface, stroke.dt, variant="support")
        err[name] = float(np.sum(np.abs(real.widths - stroke.widths)))
    assert err["aware"] < err["blind"]


def test_plan_csv_round_trip(tmp_path):
    stroke = line_stroke(6)
    x0 = start_on(stroke)
    plan = plan_stroke(stroke, x0, ToolTipState.from_tilt(5.45, 50.0, 1e-4), PARAMS, SURFACE, BOX,
                       PlannerConfig(restarts=0, max_iterations=10))
    write_plan(plan, tmp_path / "plan.csv")
    back = read_plan(tmp_path / "plan.csv")
    assert isinstance(back, Plan)
    assert np.array_equal(back.inputs, plan.inputs)
    assert np.array_equal(back.predicted_states, plan.predicted_states)
    assert np.array_equal(back.predicted_widths, plan.predicted_widths)


def test_config_validation():
    with pytest.raises(ValueError):
        PlannerConfig(Q=-np.eye(3))
    with pytest.raises(ValueError):
        PlannerConfig(kappa=0.0)
    with pytest.raises(ValueError):
        PlannerConfig(max_iterations=0)
