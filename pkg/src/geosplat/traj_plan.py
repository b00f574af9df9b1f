"""Camera-extension directives and extended-sequence bookkeeping.

A directive is the text ``"up|down X, left|right X, forward|back X"``.
Signs: up, left and forward are positive. Angles are degrees, the advance
is in scene units.

Camera axes follow COLMAP (x right, y down, z forward), so "up" is ``-y``.
Pitch turns about the camera's +x axis and yaw about ``-y``. A combined
directive applies pitch first, then yaw, both about the *base* camera's
axes: ``R_local = R_yaw @ R_pitch`` in camera coordinates.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace

import numpy as np

from . import rotations
from .splat_core import CameraPose

__all__ = [
    "DirectiveError", "UnparsableClause", "OutOfRange", "CountMismatch", "RepeatedDirective",
    "DegenerateFrameCount", "ExtensionDirective", "SequenceLayout", "parse_directive",
    "format_directive", "parse_plan", "directive_rotation", "synthesize_trajectory",
    "build_layout",
]

PITCH_AXIS = np.array([1.0, 0.0, 0.0])
YAW_AXIS = np.array([0.0, -1.0, 0.0])

_KEYWORDS = {
    "up": ("pitch", 1.0), "down": ("pitch", -1.0),
    "left": ("yaw", 1.0), "right": ("yaw", -1.0),
    "forward": ("advance", 1.0), "back": ("advance", -1.0),
}
_CLAUSE = re.compile(r"^\s*([a-z]+)\s+(\d+(?:\.\d*)?|\.\d+)\s*°?\s*$", re.IGNORECASE)
_ENUMERATION = re.compile(r"^\s*(?:\(?\d+[.):]|[-*•])\s*")


class DirectiveError(ValueError):
    pass


class UnparsableClause(DirectiveError):
    def __init__(self, text: str, reason: str = "no direction keyword"):
        super().__init__(f"cannot parse clause {text!r}: {reason}")
        self.text = text


class OutOfRange(DirectiveError):
    pass


class CountMismatch(DirectiveError):
    def __init__(self, found: int, expected: int):
        super().__init__(f"found {found} directives, expected {expected}")
        self.found = found
        self.expected = expected


class RepeatedDirective(DirectiveError):
    def __init__(self, i: int, j: int):
        super().__init__(f"directives {i} and {j} are identical")
        self.i = i
        self.j = j


class DegenerateFrameCount(ValueError):
    pass


@dataclass(frozen=True)
class ExtensionDirective:
    pitch: float = 0.0
    yaw: float = 0.0
    advance: float = 0.0
    # Axes that were absent from the parsed text and defaulted to zero.
    missing: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        for name in ("pitch", "yaw", "advance"):
            if not math.isfinite(getattr(self, name)):
                raise OutOfRange(f"{name} must be finite")
        if abs(self.pitch) > 90.0:
            raise OutOfRange(f"|pitch| = {abs(self.pitch)} exceeds 90")
        if abs(self.yaw) > 180.0:
            raise OutOfRange(f"|yaw| = {abs(self.yaw)} exceeds 180")

    @property
    def incomplete(self) -> bool:
        return bool(self.missing)


def parse_directive(answer: str) -> ExtensionDirective:
    values: dict[str, float] = {}
    clauses = answer.split(",")
    for clause in clauses:
        text = clause.strip()
        m = _CLAUSE.match(text)
        if m is None or m.group(1).lower() not in _KEYWORDS:
            raise UnparsableClause(text)
        axis, sign = _KEYWORDS[m.group(1).lower()]
        if axis in values:
            raise UnparsableClause(text, f"second {axis} clause")
        values[axis] = sign * float(m.group(2))
    missing = tuple(a for a in ("pitch", "yaw", "advance") if a not in values)
    return ExtensionDirective(values.get("pitch", 0.0), values.get("yaw", 0.0),
                              values.get("advance", 0.0), missing)


def _fmt(x: float) -> str:
    return np.format_float_positional(abs(x), trim="-")


def format_directive(d: ExtensionDirective) -> str:
    """Canonical text; ``parse_directive(format_directive(d)) == d`` exactly."""
    pitch = ("down" if d.pitch < 0 else "up") + " " + _fmt(d.pitch)
    yaw = ("right" if d.yaw < 0 else "left") + " " + _fmt(d.yaw)
    adv = ("back" if d.advance < 0 else "forward") + " " + _fmt(d.advance)
    return f"{pitch}, {yaw}, {adv}"


def parse_plan(answer: str, expected: int = 4) -> list[ExtensionDirective]:
    """Parse a list of directives separated by newlines or semicolons.

    Leading enumeration such as ``1.``, ``2)`` or ``-`` is ignored. Two equal
    directives raise :class:`RepeatedDirective` with their 0-based positions.
    """
    lines = [_ENUMERATION.sub("", part, count=1).strip() for part in re.split(r"[;\n]", answer)]
    lines = [ln for ln in lines if ln]
    if len(lines) != expected:
        raise CountMismatch(len(lines), expected)
    plan = [parse_directive(ln) for ln in lines]
    for j in range(len(plan)):
        for i in range(j):
            if plan[i] == plan[j]:
                raise RepeatedDirective(i, j)
    return plan


def directive_rotation(pitch_deg: float, yaw_deg: float) -> np.ndarray:
    """Camera-frame rotation quaternion ``q_yaw * q_pitch``."""
    qp = rotations.from_axis_angle(PITCH_AXIS, math.radians(pitch_deg))
    qy = rotations.from_axis_angle(YAW_AXIS, math.radians(yaw_deg))
    return rotations.multiply(qy, qp)


def synthesize_trajectory(base: CameraPose, d: ExtensionDirective, frames: int) -> list[CameraPose]:
    """Camera path realizing ``d`` from ``base`` over ``frames`` poses.

    Pose ``k`` applies the fraction ``f = k / (frames - 1)`` of the rotation
    (slerp from identity) and sits ``advance * f`` along its own viewing
    direction from the base center. Pose 0 is ``base`` itself.
    """
    if frames < 2:
        raise DegenerateFrameCount(f"need at least 2 frames, got {frames}")
    q_base = rotations.normalize(np.array(base.rotation, dtype=np.float64))
    q_full = directive_rotation(d.pitch, d.yaw)
    c0 = np.array(base.center, dtype=np.float64)
    out = [base]
    for k in range(1, frames):
        f = k / (frames - 1)
        q_local = rotations.slerp(np.array([1.0, 0.0, 0.0, 0.0]), q_full, f)
        # camera->world composes on the right, so world->camera gets the conjugate on the left
        q = rotations.normalize(rotations.multiply(rotations.conjugate(q_local), q_base))
        view = rotations.to_matrix(q).T[:, 2]
        center = c0 + d.advance * f * view
        out.append(replace(base, rotation=tuple(float(v) for v in q),
                           center=tuple(float(v) for v in center)))
    return out


@dataclass(frozen=True)
class SequenceLayout:
    n: int
    segment_ids: tuple[str, ...]
    init_length: int
    extension_length: int
    total_length: int

    def role(self, segment_id: str) -> str:
        if segment_id == "init":
            return "Init"
        return "ExtendLeft" if segment_id.startswith("left_") else "ExtendRight"

    def length(self, segment_id: str) -> int:
        return self.init_length if segment_id == "init" else self.extension_length

    def frame_ranges(self) -> dict[str, tuple[int, int]]:
        """Half-open ranges of each segment in the concatenated video."""
        ranges, start = {}, 0
        for sid in self.segment_ids:
            stop = start + self.length(sid)
            ranges[sid] = (start, stop)
            start = stop
        return ranges


def build_layout(n: int, T: int, T_prime: int) -> SequenceLayout:
    if n < 0 or T < 1 or T_prime < 1:
        raise ValueError("need n >= 0, T >= 1, T' >= 1")
    ids = tuple([f"left_{i}" for i in range(n, 0, -1)] + ["init"]
                + [f"right_{i}" for i in range(1, n + 1)])
    return SequenceLayout(n, ids, T, T_prime, T + 2 * n * T_prime)
