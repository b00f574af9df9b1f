import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from geosplat import rotations
from geosplat.traj_plan import (CountMismatch, DegenerateFrameCount, ExtensionDirective, OutOfRange,
                                RepeatedDirective, UnparsableClause, build_layout, directive_rotation,
                                format_directive, parse_directive, parse_plan, synthesize_trajectory)
from factories import identity_camera, random_camera
from oracles import quat_matrix, rodrigues


@pytest.mark.parametrize("text, pitch, yaw, adv", [
    ("up 10, left 20, forward 0.5", 10, 20, 0.5),
    ("down 5, right 30, back 1", -5, -30, -1),
    ("  UP 10° , Left 0 ,forward .25", 10, 0, 0.25),
    ("forward 2, up 3, right 4", 3, -4, 2),
    ("up 90, left 180, forward 0", 90, 180, 0),
])
def test_parse_directive(text, pitch, yaw, adv):
    d = parse_directive(text)
    assert (d.pitch, d.yaw, d.advance) == (pitch, yaw, adv)
    assert not d.incomplete


def test_missing_axes_default_to_zero_and_are_reported():
    d = parse_directive("left 15")
    assert (d.pitch, d.yaw, d.advance) == (0.0, 15.0, 0.0)
    assert d.missing == ("pitch", "advance")


@pytest.mark.parametrize("text, err", [
    ("sideways 10", UnparsableClause),
    ("up ten", UnparsableClause),
    ("up -10", UnparsableClause),
    ("up 10, down 5", UnparsableClause),
    ("", UnparsableClause),
    ("up 91", OutOfRange),
    ("right 180.5", OutOfRange),
])
def test_parse_errors(text, err):
    with pytest.raises(err):
        parse_directive(text)


def test_plan_enumeration_and_separators():
    text = "1. up 10, left 20, forward 0.1\n2) down 5, right 5, back 0.2; - up 0, left 90, forward 0\n* up 1, left 1, forward 1"
    plan = parse_plan(text)
    assert [d.yaw for d in plan] == [20, -5, 90, 1]


def test_plan_count_mismatch():
    with pytest.raises(CountMismatch) as info:
        parse_plan("up 1, left 1, forward 1\nup 2, left 2, forward 2")
    assert (info.value.found, info.value.expected) == (2, 4)


def test_plan_repeated():
    with pytest.raises(RepeatedDirective) as info:
        parse_plan("up 1, left 1, forward 1\nup 2, left 2, forward 2\nup 1, left 1, forward 1", expected=3)
    assert (info.value.i, info.value.j) == (0, 2)


directives = st.builds(
    ExtensionDirective,
    pitch=st.floats(-90, 90, allow_nan=False),
    yaw=st.floats(-180, 180, allow_nan=False),
    advance=st.floats(-1e6, 1e6, allow_nan=False),
)


@given(directives)
def test_format_parse_round_trip_is_exact(d):
    back = parse_directive(format_directive(d))
    assert (back.pitch, back.yaw, back.advance) == (d.pitch + 0.0, d.yaw + 0.0, d.advance + 0.0)


def test_yaw_left_90_turns_view_to_minus_x():
    cam = identity_camera()
    traj = synthesize_trajectory(cam, ExtensionDirective(0, 90, 1.0), 5)
    view = quat_matrix(traj[-1].rotation).T[:, 2]
    np.testing.assert_allclose(view, [-1, 0, 0], atol=1e-12)
    np.testing.assert_allclose(traj[-1].center, [-1, 0, 0], atol=1e-12)


def test_pitch_up_looks_toward_minus_y():
    traj = synthesize_trajectory(identity_camera(), ExtensionDirective(90, 0, 0), 2)
    np.testing.assert_allclose(quat_matrix(traj[-1].rotation).T[:, 2], [0, -1, 0], atol=1e-12)


@given(st.integers(0, 10 ** 6), directives.filter(lambda d: abs(d.advance) < 10), st.integers(2, 12))
def test_synthesized_path_matches_rodrigues_oracle(seed, d, frames):
    base = random_camera(np.random.default_rng(seed))
    traj = synthesize_trajectory(base, d, frames)
    assert traj[0] == base
    assert len(traj) == frames
    Rb = quat_matrix(base.rotation)
    # camera-to-world of the final pose: base axes, then pitch about x, then yaw about -y
    local = rodrigues([0, -1, 0], math.radians(d.yaw)) @ rodrigues([1, 0, 0], math.radians(d.pitch))
    c2w = Rb.T @ local
    np.testing.assert_allclose(quat_matrix(traj[-1].rotation), c2w.T, atol=1e-9)
    np.testing.assert_allclose(traj[-1].center, np.array(base.center) + d.advance * c2w[:, 2], atol=1e-8)


@given(st.floats(-90, 90), st.floats(-180, 180))
def test_directive_rotation_is_unit(p, y):
    assert np.linalg.norm(directive_rotation(p, y)) == pytest.approx(1.0)


def test_degenerate_frame_count():
    with pytest.raises(DegenerateFrameCount):
        synthesize_trajectory(identity_camera(), ExtensionDirective(), 1)


def test_layout_small():
    lay = build_layout(2, 10, 4)
    assert lay.segment_ids == ("left_2", "left_1", "init", "right_1", "right_2")
    assert lay.total_length == 26
    assert lay.frame_ranges() == {"left_2": (0, 4), "left_1": (4, 8), "init": (8, 18),
                                  "right_1": (18, 22), "right_2": (22, 26)}
    assert lay.role("init") == "Init" and lay.role("left_2") == "ExtendLeft"


@given(st.integers(0, 20), st.integers(1, 200), st.integers(1, 200))
def test_layout_properties(n, T, Tp):
    lay = build_layout(n, T, Tp)
    assert lay.total_length == T + 2 * n * Tp
    assert len(lay.segment_ids) == 2 * n + 1
    ranges = list(lay.frame_ranges().values())
    assert ranges[0][0] == 0 and ranges[-1][1] == lay.total_length
    assert all(a[1] == b[0] for a, b in zip(ranges, ranges[1:]))


def test_layout_rejects_bad_input():
    for args in [(-1, 5, 5), (1, 0, 5), (1, 5, 0)]:
        with pytest.raises(ValueError):
            build_layout(*args)


def test_identity_directive_keeps_pose():
    base = random_camera(np.random.default_rng(1))
    for p in synthesize_trajectory(base, ExtensionDirective(), 4):
        assert rotations.geodesic_angle(np.array(p.rotation), np.array(base.rotation)) < 1e-12
        np.testing.assert_allclose(p.center, base.center)
