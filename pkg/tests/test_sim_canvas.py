import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import misclassified_pixels, random_footprint
from wearplan.errors import CanvasOverflow
from wearplan.force_model import ForceLaw, ForceModelParams, SurfaceMap
from wearplan.kinematics import BoxConstraints, rollout_states
from wearplan.planner import Plan, PlannerConfig, plan_stroke
from wearplan.ref_stroke import build_polyline_stroke
from wearplan.sim_canvas import (Canvas, GroundTruth, execute, read_canvas, read_trace, stamp_segment,
                                 write_canvas, write_trace)
from wearplan.stroke_vision import threshold, width_profile
from wearplan.tool_geometry import ToolTipState, axes, center_offset

SCALE = 1e-5
FLAT = SurfaceMap.flat()
LINEAR = ForceLaw(-1000.0, 0.05)
DT = 0.008


def plan_from_inputs(x0, U):
    U = np.asarray(U, dtype=float).reshape(-1, 4)
    X = rollout_states(x0, U, DT)
    return Plan(U, X, np.zeros(len(X)), float("nan"))


def canvas_around(x0, x1, y0, y1, margin=3e-3):
    return Canvas.blank((x0, y0, x1, y1), SCALE, margin)


def test_above_surface_leaves_canvas_blank():
    canvas = canvas_around(-0.003, 0.003, -0.001, 0.001)
    plan = plan_from_inputs([-0.002, 0.0, 0.01, 0.0], np.tile([0.05, 0.0, 0.0, 0.0], (10, 1)))
    tip = ToolTipState.from_tilt(5.45, 0.0, 1e-4)
    ex = execute(plan, GroundTruth(LINEAR, 0.02, FLAT), tip, canvas, DT)
    assert ex.canvas == canvas
    assert ex.tip.d == tip.d


def test_stationary_contact_stamps_a_disk():
    d = 1e-3
    tip = ToolTipState.from_tilt(5.45, 0.0, d)
    canvas = canvas_around(0.0, 0.0, 0.0, 0.0, 1e-3)
    plan = plan_from_inputs([0.0, 0.0, -1e-3, 0.0], np.zeros((1, 4)))
    ex = execute(plan, GroundTruth(LINEAR, 0.0, FLAT), tip, canvas, DT)
    r_px = d / 5.45 / SCALE
    area = math.pi * r_px ** 2
    count = int(np.count_nonzero(ex.canvas.pixels))
    assert abs(count - area) <= 2 * math.pi * r_px
    ax = axes(tip)
    assert math.pi * ax.alpha * ax.beta / 4 / SCALE ** 2 == pytest.approx(area, rel=1e-12)


@pytest.mark.parametrize("seed", range(40))
def test_stamp_matches_section_equation(seed):
    assert misclassified_pixels(*random_footprint(np.random.default_rng(seed))) == 0


def test_stamp_center_is_shifted_along_major():
    tip = ToolTipState.from_tilt(5.45, 50.0, 5e-4)
    canvas = Canvas.blank((-1e-3, -1e-3, 1e-3, 1e-3), SCALE, 1e-3)
    stamp_segment(canvas, tip, 0.0, (1.0, 0.0), (0.0, 0.0))
    ii, jj = np.nonzero(canvas.pixels)
    # tangent +x, psi 0: minor along +x, major along +y
    cy = canvas.origin[1] + ii.mean() * SCALE
    cx = canvas.origin[0] + jj.mean() * SCALE
    assert cy == pytest.approx(center_offset(tip), abs=SCALE)
    assert abs(cx) <= SCALE


def test_overflow():
    tip = ToolTipState.from_tilt(5.45, 0.0, 1e-3)
    canvas = Canvas.blank((0, 0, 1e-4, 1e-4), SCALE)
    with pytest.raises(CanvasOverflow):
        stamp_segment(canvas, tip, 0.0, (1.0, 0.0), (0.0, 0.0))


def _straight_setup(n=60, width=4e-4, kd=0.0, gamma=50.0, d0=4e-4):
    stroke = build_polyline_stroke([(-0.006 + 2e-4 * i, 0.0) for i in range(n + 1)], [width] * (n + 1))
    tip = ToolTipState.from_tilt(5.45, gamma, d0, kd=kd)
    x0 = np.array([-0.006, 0.0, -5e-4, 0.0])
    box = BoxConstraints([-0.05, -0.05, -0.01, -math.pi], [0.05, 0.05, 0.01, math.pi],
                         [-0.1, -0.1, -0.05, -10.0], [0.1, 0.1, 0.05, 10.0])
    return stroke, tip, x0, box


def test_matched_models_reproduce_predicted_widths():
    stroke, tip, x0, box = _straight_setup(kd=0.02, d0=3e-4)
    params = ForceModelParams(LINEAR.theta, LINEAR.theta0)
    plan = plan_stroke(stroke, x0, tip, params, FLAT, box, PlannerConfig(Q=np.diag([1e10, 1e10, 1e8])))
    canvas = canvas_around(-0.006, 0.006, -0.001, 0.001)
    ex = execute(plan, GroundTruth(LINEAR, tip.kd, FLAT), tip, canvas, DT)
    np.testing.assert_allclose(ex.offsets, plan.predicted_offsets, rtol=1e-12)
    prof = width_profile(threshold(ex.canvas.pixels, 128), stroke, ex.canvas)
    interior = slice(3, -3)
    assert prof.valid[interior].all()
    assert np.max(np.abs(prof.widths[interior] - plan.predicted_widths[interior])) <= SCALE + 1e-12


def test_deposition_is_monotone_and_widths_grow_with_wear():
    stroke, tip, x0, _ = _straight_setup(kd=0.05, gamma=0.0, d0=1e-3)
    plan = plan_from_inputs(x0, np.tile([0.025, 0.0, 0.0, 0.0], (60, 1)))
    canvas = canvas_around(-0.006, 0.006, -0.002, 0.002)
    canvas.pixels[::7, ::5] = 255
    before = canvas.pixels.copy()
    ex = execute(plan, GroundTruth(LINEAR, tip.kd, FLAT), tip, canvas, DT)
    assert np.all(ex.canvas.pixels[before == 255] == 255)
    assert np.array_equal(canvas.pixels, before)
    blank = execute(plan, GroundTruth(LINEAR, tip.kd, FLAT), tip, canvas_around(-0.006, 0.006, -0.002, 0.002), DT)
    prof = width_profile(blank.canvas.pixels > 0, stroke, blank.canvas)
    w = prof.widths[5:-5]
    assert np.all(np.diff(w) >= -SCALE - 1e-12)
    assert w[-1] > w[0]


def test_noise_is_seeded():
    stroke, tip, x0, _ = _straight_setup(kd=0.05)
    plan = plan_from_inputs(x0, np.tile([0.025, 0.0, 0.0, 0.0], (30, 1)))
    truth = GroundTruth(LINEAR, 0.05, FLAT, noise_sd=0.05, seed=9)
    canvas = canvas_around(-0.006, 0.006, -0.002, 0.002)
    a, b = execute(plan, truth, tip, canvas, DT), execute(plan, truth, tip, canvas, DT)
    assert np.array_equal(a.forces, b.forces) and a.canvas == b.canvas


def test_pgm_tokens(tmp_path):
    c = Canvas(np.array([[0, 255, 0], [255, 0, 255]]), SCALE, (0.001, -0.002))
    path = tmp_path / "c.pgm"
    write_canvas(c, path)
    lines = [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]
    assert " ".join(lines).split() == ["P2", "3", "2", "255", "0", "255", "0", "255", "0", "255"]


@settings(max_examples=20)
@given(h=st.integers(1, 30), w=st.integers(1, 30), seed=st.integers(0, 2**32 - 1))
def test_pgm_round_trip(tmp_path_factory, h, w, seed):
    rng = np.random.default_rng(seed)
    c = Canvas(rng.choice([0, 255], (h, w)).astype(np.uint8), rng.uniform(1e-6, 1e-4),
               tuple(rng.uniform(-1, 1, 2)))
    path = tmp_path_factory.mktemp("pgm") / "c.pgm"
    write_canvas(c, path)
    assert read_canvas(path) == c


def test_blank_pgm_body(tmp_path):
    write_canvas(Canvas.blank((0, 0, 5e-5, 3e-5), SCALE), tmp_path / "b.pgm")
    body = [ln for ln in (tmp_path / "b.pgm").read_text().splitlines() if not ln.startswith("#")][3:]
    assert body and all(tok == "0" for ln in body for tok in ln.split())


def test_trace_round_trip(tmp_path):
    stroke, tip, x0, _ = _straight_setup(kd=0.05)
    plan = plan_from_inputs(x0, np.tile([0.025, 0.0, 0.0, 0.0], (10, 1)))
    ex = execute(plan, GroundTruth(LINEAR, 0.05, FLAT), tip, canvas_around(-0.006, 0.0, -0.001, 0.001), DT)
    write_trace(ex, tmp_path / "t.csv")
    states, forces, offsets = read_trace(tmp_path / "t.csv")
    assert np.array_equal(states, ex.states)
    assert np.array_equal(forces, ex.forces) and np.array_equal(offsets, ex.offsets)
