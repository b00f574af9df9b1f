import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from geosplat import rotations
from geosplat.colmap_io import PoseRecord
from geosplat.trajectory import (Status, Thresholds, TooShort, Which, coverage_check, detect_abnormal,
                                 pose_delta, trajectory_deltas)
from factories import smooth_poses
from oracles import quat_matrix, rotation_angle


def pose(frame, center, q=(1.0, 0.0, 0.0, 0.0)):
    R = quat_matrix(q)
    t = -R @ np.asarray(center, dtype=float)
    return PoseRecord(frame + 1, tuple(q), tuple(t), 1, f"f_{frame}.png", frame)


def test_delta_against_independent_geometry():
    rng = np.random.default_rng(3)
    for _ in range(20):
        qa, qb = (tuple(rotations.canonicalize(rotations.normalize(rng.normal(size=4)))) for _ in "ab")
        ca, cb = rng.normal(size=3), rng.normal(size=3)
        d = pose_delta(pose(0, ca, qa), pose(1, cb, qb))
        assert d.translation_jump == pytest.approx(np.linalg.norm(cb - ca), rel=1e-12)
        assert d.rotation_change == pytest.approx(rotation_angle(quat_matrix(qa), quat_matrix(qb)), abs=1e-6)
        assert d.frame_index == 1


def test_too_short():
    with pytest.raises(TooShort):
        detect_abnormal([pose(0, [0, 0, 0])])
    with pytest.raises(TooShort):
        detect_abnormal([])


def test_threshold_is_strict():
    traj = [pose(0, [0, 0, 0]), pose(1, [5.0, 0, 0])]
    assert detect_abnormal(traj).status is Status.NORMAL
    traj = [pose(0, [0, 0, 0]), pose(1, [5.0 + 1e-9, 0, 0])]
    assert detect_abnormal(traj).flagged_frames == [(1, Which.TRANSLATION)]


def test_rotation_and_both_flags():
    q_turn = tuple(rotations.from_axis_angle([0, 1, 0], 0.6))
    traj = [pose(0, [0, 0, 0]), pose(1, [0, 0, 0], q_turn), pose(2, [9, 0, 0], (1.0, 0, 0, 0))]
    v = detect_abnormal(traj, segment_id="left_1")
    assert v.segment_id == "left_1"
    assert v.status is Status.ABNORMAL
    assert v.flagged_frames == [(1, Which.ROTATION), (2, Which.BOTH)]


def test_rotation_exactly_at_threshold_passes():
    q = tuple(rotations.from_axis_angle([1, 0, 0], 0.5 - 1e-12))
    assert detect_abnormal([pose(0, [0, 0, 0]), pose(1, [0, 0, 0], q)]).status is Status.NORMAL


def test_median_normalization_is_scale_free():
    rng = np.random.default_rng(0)
    traj = smooth_poses(rng, 12, step=0.2, turn=0.01)
    big = [PoseRecord(p.image_id, p.q, tuple(1000 * np.array(p.t)), 1, p.image_name, p.frame_index)
           for p in traj]
    th = Thresholds(T1=3.0, T2=0.5)
    assert detect_abnormal(big, th).status is Status.ABNORMAL
    assert detect_abnormal(big, th, normalize_by_median=True).status is Status.NORMAL


def test_threshold_validation():
    with pytest.raises(ValueError):
        Thresholds(T1=0)
    with pytest.raises(ValueError):
        Thresholds(T2=4.0)


@pytest.mark.parametrize("frames, expected, missing", [
    ([0, 1, 2], 3, []), ([0, 2], 4, [1, 3]), ([], 2, [0, 1]),
])
def test_coverage(frames, expected, missing):
    assert coverage_check([pose(f, [0, 0, 0]) for f in frames], expected) == missing


def test_coverage_rejects_surplus():
    with pytest.raises(ValueError):
        coverage_check([pose(f, [0, 0, 0]) for f in range(3)], 2)


@given(st.integers(0, 10 ** 6), st.integers(2, 30))
def test_smooth_trajectories_are_normal(seed, count):
    traj = smooth_poses(np.random.default_rng(seed), count)
    assert detect_abnormal(traj).status is Status.NORMAL
    assert len(trajectory_deltas(traj)) == count - 1


@given(st.integers(0, 10 ** 6), st.integers(3, 20), st.data())
def test_single_jump_flags_exactly_that_frame(seed, count, data):
    traj = smooth_poses(np.random.default_rng(seed), count)
    k = data.draw(st.integers(1, count - 1))
    shift = np.array([6.0, 0.0, 0.0])
    moved = []
    for p in traj:
        if p.frame_index >= k:
            c = p.center + shift
            t = -p.rotation @ c
            p = PoseRecord(p.image_id, p.q, tuple(t), 1, p.image_name, p.frame_index)
        moved.append(p)
    v = detect_abnormal(moved)
    assert v.flagged_frames == [(k, Which.TRANSLATION)]


@given(st.integers(0, 10 ** 6))
def test_rotation_change_bounded(seed):
    for d in trajectory_deltas(smooth_poses(np.random.default_rng(seed), 6, turn=3.0)):
        assert 0.0 <= d.rotation_change <= math.pi
