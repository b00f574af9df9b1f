"""Seeded ground-truth scenes, trajectories and error metrics.

The room is an axis-aligned box in COLMAP-style world coordinates (y down,
cameras looking along +z), tiled with flat gaussian disks whose shortest
axis is the wall normal. A camera near the origin sees the back wall, floor,
ceiling and side walls.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from . import rotations
from .colmap_io import CameraIntrinsics, PoseRecord
from .splat_core import CameraPose, GaussianScene, RenderConfig, RenderedFrame, render

__all__ = [
    "ROOM", "Fault", "pinhole", "room_scene", "orbit_trajectory", "inject_fault",
    "perturb_scene", "depth_rmse", "normal_angle_deg", "scene_diameter", "poses_to_records",
    "render_views",
]

# x0, x1, y0, y1, z0, z1
ROOM = (-2.0, 2.0, -1.5, 1.5, -1.0, 4.0)

# plane: (axis, coordinate, inward normal sign) with tangent axes implied
_PLANES = (
    (2, ROOM[5], -1.0),  # back wall
    (1, ROOM[3], -1.0),  # floor
    (1, ROOM[2], +1.0),  # ceiling
    (0, ROOM[0], +1.0),  # left wall
    (0, ROOM[1], -1.0),  # right wall
)
_PLANE_AREAS = np.array([
    (ROOM[1] - ROOM[0]) * (ROOM[3] - ROOM[2]),
    (ROOM[1] - ROOM[0]) * (ROOM[5] - ROOM[4]),
    (ROOM[1] - ROOM[0]) * (ROOM[5] - ROOM[4]),
    (ROOM[3] - ROOM[2]) * (ROOM[5] - ROOM[4]),
    (ROOM[3] - ROOM[2]) * (ROOM[5] - ROOM[4]),
])
_PLANE_WEIGHTS = _PLANE_AREAS / _PLANE_AREAS.sum()


def pinhole(width: int = 32, height: int | None = None, fov_deg: float = 70.0,
            camera_id: int = 1) -> CameraIntrinsics:
    height = width if height is None else height
    f = 0.5 * width / math.tan(math.radians(fov_deg) / 2.0)
    return CameraIntrinsics(camera_id, "PINHOLE", width, height, f, f, width / 2.0, height / 2.0)


def _axis_quat(axis: int) -> np.ndarray:
    """Rotation whose local z axis is world ``axis``."""
    if axis == 2:
        return np.array([1.0, 0.0, 0.0, 0.0])
    if axis == 0:  # local z -> world x
        return rotations.from_axis_angle([0.0, 1.0, 0.0], math.pi / 2)
    return rotations.from_axis_angle([1.0, 0.0, 0.0], -math.pi / 2)  # local z -> world y


def room_scene(count: int = 200, seed: int = 0, disk_size: float = 0.35,
               thickness: float = 0.02) -> GaussianScene:
    """``count`` flat gaussians scattered over five walls of :data:`ROOM`."""
    rng = np.random.default_rng(seed)
    plane = rng.choice(len(_PLANES), size=count, p=_PLANE_WEIGHTS)
    lo = np.array(ROOM[0::2])
    hi = np.array(ROOM[1::2])
    means = rng.uniform(lo, hi, size=(count, 3))
    tint = rng.uniform(0.15, 0.85, size=(len(_PLANES), 3))
    colors = np.clip(tint[plane] + rng.normal(0.0, 0.28, (count, 3)), 0.0, 1.0)
    quats = np.empty((count, 4))
    log_scales = np.empty((count, 3))
    for i, p in enumerate(plane):
        axis, coord, _ = _PLANES[p]
        means[i, axis] = coord
        spin = rotations.from_axis_angle([0.0, 0.0, 1.0], rng.uniform(0.0, math.pi))
        quats[i] = rotations.multiply(_axis_quat(axis), spin)
        s = disk_size * rng.uniform(0.7, 1.3, 2)
        log_scales[i] = np.log([s[0], s[1], thickness])
    opacity_logits = rng.uniform(3.0, 5.0, count)
    return GaussianScene(means, log_scales, quats, opacity_logits, colors)


def orbit_trajectory(intrinsics: CameraIntrinsics, frames: int, seed: int = 0,
                     sweep_deg: float = 30.0, radius: float = 0.4) -> list[CameraPose]:
    """Smooth pan from ``-sweep/2`` to ``+sweep/2`` while sliding sideways."""
    rng = np.random.default_rng(seed)
    phase = rng.uniform(-0.5, 0.5)
    out = []
    for k in range(frames):
        f = k / max(frames - 1, 1)
        yaw = math.radians(sweep_deg * (f - 0.5) + 10.0 * phase)
        # world->camera rotation of a camera yawed about world -y
        q = rotations.conjugate(rotations.from_axis_angle([0.0, -1.0, 0.0], yaw))
        center = (radius * (f - 0.5) * 2.0, 0.1 * phase, 0.3 * phase)
        out.append(CameraPose(tuple(float(v) for v in q), tuple(float(c) for c in center), intrinsics))
    return out


@dataclass(frozen=True)
class Fault:
    """A step discontinuity starting at ``frame``: every later pose shifts too."""

    kind: str  # "translation" or "rotation"
    frame: int
    magnitude: float
    axis: tuple[float, float, float]


def inject_fault(poses: Sequence[CameraPose], fault: Fault) -> list[CameraPose]:
    """Apply ``fault`` to ``poses[fault.frame:]``.

    A translation fault moves camera centers by ``magnitude`` along ``axis``.
    A rotation fault turns cameras by ``magnitude`` radians about ``axis``
    (camera frame). Motion between frames after the fault is unchanged, so
    only the jump into ``fault.frame`` is discontinuous.
    """
    if not 1 <= fault.frame < len(poses):
        raise ValueError(f"fault frame {fault.frame} outside 1..{len(poses) - 1}")
    axis = np.asarray(fault.axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    out = list(poses[:fault.frame])
    r = rotations.from_axis_angle(axis, fault.magnitude)
    for p in poses[fault.frame:]:
        if fault.kind == "translation":
            c = np.array(p.center) + fault.magnitude * axis
            out.append(replace(p, center=tuple(float(v) for v in c)))
        elif fault.kind == "rotation":
            q = rotations.normalize(rotations.multiply(r, np.array(p.rotation)))
            out.append(replace(p, rotation=tuple(float(v) for v in q)))
        else:
            raise ValueError(f"unknown fault kind {fault.kind!r}")
    return out


def perturb_scene(scene: GaussianScene, seed: int, mean_sigma: float = 0.05,
                  log_scale_sigma: float = 0.1, rot_sigma: float = 0.1) -> GaussianScene:
    """Copy of ``scene`` with gaussian noise on means, log-scales and orientations."""
    rng = np.random.default_rng(seed)
    out = scene.copy()
    n = len(scene)
    out.means = out.means + rng.normal(0.0, mean_sigma, out.means.shape)
    out.log_scales = out.log_scales + rng.normal(0.0, log_scale_sigma, out.log_scales.shape)
    jitter = np.concatenate([np.ones((n, 1)), rng.normal(0.0, rot_sigma / 2.0, (n, 3))], axis=1)
    out.quats = rotations.normalize(rotations.multiply(out.quats, rotations.normalize(jitter)))
    return out


def poses_to_records(poses: Sequence[CameraPose], name_fmt: str = "frame_{:06d}.png",
                     first_image_id: int = 1) -> list[PoseRecord]:
    return [p.to_pose_record(first_image_id + k, name_fmt.format(k), k) for k, p in enumerate(poses)]


def scene_diameter(scene: GaussianScene) -> float:
    return float(np.linalg.norm(scene.means.max(axis=0) - scene.means.min(axis=0)))


def _mask(truth: RenderedFrame, alpha_threshold: float) -> np.ndarray:
    return truth.alpha > alpha_threshold


def depth_rmse(pred: Sequence[RenderedFrame], truth: Sequence[RenderedFrame],
               alpha_threshold: float = 0.5) -> float:
    """RMSE of rendered depth over pixels the ground truth covers."""
    err = [(p.depth - t.depth)[_mask(t, alpha_threshold)] for p, t in zip(pred, truth)]
    e = np.concatenate(err)
    return float(np.sqrt(np.mean(e * e)))


def normal_angle_deg(pred: Sequence[RenderedFrame], truth: Sequence[RenderedFrame],
                     alpha_threshold: float = 0.5) -> float:
    """Mean angle between composited normal directions, in degrees."""
    angles = []
    for p, t in zip(pred, truth):
        m = _mask(t, alpha_threshold)
        a = p.normal[m]
        b = t.normal[m]
        cos = np.sum(a * b, axis=1) / np.maximum(
            np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1), 1e-12)
        angles.append(np.degrees(np.arccos(np.clip(cos, -1.0, 1.0))))
    return float(np.mean(np.concatenate(angles)))


def render_views(scene: GaussianScene, cams: Sequence[CameraPose],
                 config: RenderConfig = RenderConfig()) -> list[RenderedFrame]:
    return [render(scene, c, config) for c in cams]
