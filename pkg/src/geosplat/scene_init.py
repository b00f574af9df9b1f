"""Starting scenes for optimization."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from . import rotations
from .geo_priors import DepthMap, NormalMap
from .splat_core import CameraPose, GaussianScene

__all__ = ["init_from_depth", "init_random", "farthest_point_sample"]

THIN_RATIO = 0.1
INIT_LOGIT = 2.0
CANDIDATES_PER_VIEW = 1024
NEIGHBORS = 3


def _backproject(cam: CameraPose, u: np.ndarray, v: np.ndarray, depth: np.ndarray) -> np.ndarray:
    K = cam.intrinsics
    x = (u + 0.5 - K.cx) / K.fx * depth
    y = (v + 0.5 - K.cy) / K.fy * depth
    pts = np.stack([x, y, depth], axis=1)
    return pts @ cam.R + np.array(cam.center)  # R^T x + C, row-wise


def farthest_point_sample(points: np.ndarray, k: int) -> np.ndarray:
    """Indices of ``k`` points chosen greedily to spread out, starting from point 0."""
    n = len(points)
    k = min(k, n)
    chosen = np.empty(k, dtype=np.int64)
    dist = np.full(n, np.inf)
    idx = 0
    for j in range(k):
        chosen[j] = idx
        dist = np.minimum(dist, np.sum((points - points[idx]) ** 2, axis=1))
        idx = int(np.argmax(dist))
    return chosen


def init_from_depth(cams: Sequence[CameraPose], images: Sequence[np.ndarray],
                    depths: Sequence[DepthMap | None], normals: Sequence[NormalMap | None] | None = None,
                    count: int = 200) -> GaussianScene:
    """Seed gaussians on the surface seen by depth maps already in scene scale.

    Valid pixels of every view are back-projected, ``count`` of them are
    picked by farthest-point sampling, and each gaussian gets the root mean
    square distance to its nearest picked neighbours as in-plane size. With
    a normal map it is a thin disk facing that normal, otherwise isotropic.
    """
    normals = normals if normals is not None else [None] * len(depths)
    pts, cols, nrm = [], [], []
    for cam, img, d, nm in zip(cams, images, depths, normals):
        if d is None or not d.valid.any():
            continue
        vv, uu = np.nonzero(d.valid)
        pick = np.unique(np.linspace(0, len(uu) - 1, min(len(uu), CANDIDATES_PER_VIEW)).round().astype(int))
        u, v = uu[pick], vv[pick]
        pts.append(_backproject(cam, u, v, d.values[v, u].astype(np.float64)))
        cols.append(np.asarray(img)[v, u, :3])
        if nm is None:
            nrm.append(np.zeros((len(u), 3)))
        else:
            nrm.append(np.asarray(nm.values[v, u], dtype=np.float64) @ cam.R)  # R^T n
    if not pts:
        raise ValueError("no view has a valid depth pixel")
    pts, cols, nrm = np.concatenate(pts), np.concatenate(cols), np.concatenate(nrm)
    sel = farthest_point_sample(pts, count)
    means, colors, normal = pts[sel], cols[sel], nrm[sel]
    d2 = np.sum((means[:, None, :] - means[None, :, :]) ** 2, axis=2)
    np.fill_diagonal(d2, np.inf)
    nn = np.sort(d2, axis=1)[:, :NEIGHBORS]
    size = np.sqrt(np.mean(nn[:, :max(1, min(NEIGHBORS, len(means) - 1))], axis=1))
    size = np.where(np.isfinite(size), size, 0.1)
    quats = np.tile([1.0, 0.0, 0.0, 0.0], (len(means), 1))
    scales = np.repeat(size[:, None], 3, axis=1)
    for j, n in enumerate(normal):
        if np.linalg.norm(n) > 1e-6:
            quats[j] = rotations.align_z(n)
            scales[j, 2] = THIN_RATIO * size[j]
    return GaussianScene(means, np.log(scales), quats, np.full(len(means), INIT_LOGIT),
                         np.clip(colors, 0.0, 1.0))


def init_random(cams: Sequence[CameraPose], count: int = 200, seed: int = 0,
                depth_range: tuple[float, float] = (1.0, 5.0)) -> GaussianScene:
    """Gaussians on random camera rays at random depths; colors mid-gray."""
    rng = np.random.default_rng(seed)
    which = rng.integers(0, len(cams), count)
    pts = np.empty((count, 3))
    for j, c in enumerate(which):
        cam = cams[c]
        u = rng.uniform(0, cam.width)
        v = rng.uniform(0, cam.height)
        z = rng.uniform(*depth_range)
        pts[j] = _backproject(cam, np.array([u - 0.5]), np.array([v - 0.5]), np.array([z]))[0]
    log_s = np.full((count, 3), math.log(0.1))
    quats = np.tile([1.0, 0.0, 0.0, 0.0], (count, 1))
    return GaussianScene(pts, log_s, quats, np.zeros(count), np.full((count, 3), 0.5))
