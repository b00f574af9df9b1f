"""Random scenes, cameras and pose lists for tests."""

from __future__ import annotations

import math

import numpy as np

from geosplat import rotations
from geosplat.colmap_io import CameraIntrinsics, PoseRecord
from geosplat.splat_core import CameraPose, GaussianScene


def intrinsics(size: int = 32, focal: float | None = None) -> CameraIntrinsics:
    f = focal if focal is not None else size / 0.8  # half field of view atan(0.4)
    return CameraIntrinsics(1, "PINHOLE", size, size, f, f, size / 2, size / 2)


def identity_camera(size: int = 32) -> CameraPose:
    return CameraPose((1.0, 0.0, 0.0, 0.0), (0.0, 0.0, 0.0), intrinsics(size))


def random_camera(rng: np.random.Generator, size: int = 32) -> CameraPose:
    q = rotations.normalize(np.r_[1.0, rng.normal(0, 0.1, 3)])
    return CameraPose(tuple(q), tuple(rng.normal(0, 0.2, 3)), intrinsics(size))


def random_scene(rng: np.random.Generator, n: int, depth=(3.0, 6.0), spread: float = 1.0,
                 scale=(0.1, 0.6)) -> GaussianScene:
    return GaussianScene(
        means=np.c_[rng.uniform(-spread, spread, (n, 2)), rng.uniform(*depth, n)],
        log_scales=np.log(rng.uniform(*scale, (n, 3))),
        quats=rng.normal(size=(n, 4)),
        opacity_logits=rng.uniform(-1.0, 2.0, n),
        colors=rng.uniform(0.0, 1.0, (n, 3)),
    )


def smooth_poses(rng: np.random.Generator, count: int, step: float = 0.2,
                 turn: float = 0.05) -> list[PoseRecord]:
    """Pose records with small steps; centers advance and orientations drift."""
    out = []
    q = rotations.normalize(rng.normal(size=4))
    c = rng.normal(size=3)
    for k in range(count):
        R = rotations.to_matrix(q)
        t = -R @ c
        qc = rotations.canonicalize(q)
        out.append(PoseRecord(k + 1, tuple(float(v) for v in qc), tuple(float(v) for v in t), 1,
                              f"frame_{k:06d}.png", k))
        d = rng.normal(size=3)
        c = c + step * d / np.linalg.norm(d) * rng.uniform(0.5, 1.0)
        axis = rng.normal(size=3)
        q = rotations.normalize(rotations.multiply(
            rotations.from_axis_angle(axis, turn * rng.uniform(0.5, 1.0)), q))
    return out


def deg(x: float) -> float:
    return math.radians(x)
