"""Inter-frame camera motion and abnormal-segment detection."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import rotations
from .colmap_io import PoseRecord


class TooShort(ValueError):
    pass


class Which(str, enum.Enum):
    TRANSLATION = "Translation"
    ROTATION = "Rotation"
    BOTH = "Both"


class Status(str, enum.Enum):
    NORMAL = "Normal"
    ABNORMAL = "Abnormal"


@dataclass(frozen=True)
class MotionDelta:
    frame_index: int
    translation_jump: float
    rotation_change: float


@dataclass(frozen=True)
class Thresholds:
    """Per-frame discontinuity limits: T1 on center motion, T2 in radians."""

    T1: float = 5.0
    T2: float = 0.5

    def __post_init__(self):
        if not self.T1 > 0:
            raise ValueError("T1 must be positive")
        if not 0 < self.T2 <= np.pi:
            raise ValueError("T2 must lie in (0, pi]")


@dataclass
class SegmentVerdict:
    segment_id: str | None
    status: Status
    flagged_frames: list[tuple[int, Which]] = field(default_factory=list)
    missing_frames: list[int] = field(default_factory=list)


def pose_delta(a: PoseRecord, b: PoseRecord) -> MotionDelta:
    """Camera-center distance and geodesic rotation angle from ``a`` to ``b``."""
    jump = float(np.linalg.norm(b.center - a.center))
    angle = rotations.geodesic_angle(np.array(a.q), np.array(b.q))
    return MotionDelta(b.frame_index, jump, min(angle, np.pi))


def trajectory_deltas(trajectory: Sequence[PoseRecord]) -> list[MotionDelta]:
    return [pose_delta(a, b) for a, b in zip(trajectory, trajectory[1:])]


def detect_abnormal(
    trajectory: Sequence[PoseRecord],
    th: Thresholds = Thresholds(),
    segment_id: str | None = None,
    normalize_by_median: bool = False,
) -> SegmentVerdict:
    """Flag every frame whose motion relative to its predecessor exceeds a limit.

    Comparisons are strict, so a jump exactly equal to a threshold passes.
    With ``normalize_by_median`` translation jumps are divided by the median
    jump of the trajectory before testing against ``T1``, which makes the
    test independent of the reconstruction's arbitrary scale.
    """
    if len(trajectory) < 2:
        raise TooShort(f"need at least 2 poses, got {len(trajectory)}")
    deltas = trajectory_deltas(trajectory)
    jumps = np.array([d.translation_jump for d in deltas])
    if normalize_by_median:
        med = float(np.median(jumps))
        if med > 0:
            jumps = jumps / med
    flagged = []
    for d, jump in zip(deltas, jumps):
        t_bad = jump > th.T1
        r_bad = d.rotation_change > th.T2
        if t_bad and r_bad:
            flagged.append((d.frame_index, Which.BOTH))
        elif t_bad:
            flagged.append((d.frame_index, Which.TRANSLATION))
        elif r_bad:
            flagged.append((d.frame_index, Which.ROTATION))
    status = Status.ABNORMAL if flagged else Status.NORMAL
    return SegmentVerdict(segment_id, status, flagged)


def coverage_check(poses: Sequence[PoseRecord], expected_frame_count: int) -> list[int]:
    """Frame indices in ``[0, expected_frame_count)`` with no registered pose."""
    if expected_frame_count < len(poses):
        raise ValueError("more poses than expected frames")
    present = {p.frame_index for p in poses}
    return [i for i in range(expected_frame_count) if i not in present]
