"""Quaternion and rotation-matrix helpers.

Quaternions are stored as ``(w, x, y, z)`` with the Hamilton convention.
Every function accepts either a single quaternion of shape ``(4,)`` or a
stack of shape ``(..., 4)``.
"""

from __future__ import annotations

import numpy as np


def normalize(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def canonicalize(q: np.ndarray) -> np.ndarray:
    """Flip sign so that ``w >= 0``; ``q`` and ``-q`` encode the same rotation."""
    q = np.asarray(q, dtype=np.float64)
    sign = np.where(q[..., :1] < 0.0, -1.0, 1.0)
    return q * sign


def to_matrix(q: np.ndarray) -> np.ndarray:
    """Rotation matrix of a unit quaternion (no normalization is applied)."""
    q = np.asarray(q, dtype=np.float64)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    R = np.empty(q.shape[:-1] + (3, 3))
    R[..., 0, 0] = 1.0 - 2.0 * (y * y + z * z)
    R[..., 0, 1] = 2.0 * (x * y - w * z)
    R[..., 0, 2] = 2.0 * (x * z + w * y)
    R[..., 1, 0] = 2.0 * (x * y + w * z)
    R[..., 1, 1] = 1.0 - 2.0 * (x * x + z * z)
    R[..., 1, 2] = 2.0 * (y * z - w * x)
    R[..., 2, 0] = 2.0 * (x * z - w * y)
    R[..., 2, 1] = 2.0 * (y * z + w * x)
    R[..., 2, 2] = 1.0 - 2.0 * (x * x + y * y)
    return R


def matrix_grad_to_quat(q: np.ndarray, dR: np.ndarray) -> np.ndarray:
    """Pull a gradient w.r.t. ``to_matrix(q)`` back to the quaternion ``q``."""
    q = np.asarray(q, dtype=np.float64)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    g = dR
    gw = 2.0 * (-z * g[..., 0, 1] + y * g[..., 0, 2] + z * g[..., 1, 0]
                - x * g[..., 1, 2] - y * g[..., 2, 0] + x * g[..., 2, 1])
    gx = 2.0 * (y * g[..., 0, 1] + z * g[..., 0, 2] + y * g[..., 1, 0]
                - 2.0 * x * g[..., 1, 1] - w * g[..., 1, 2] + z * g[..., 2, 0]
                + w * g[..., 2, 1] - 2.0 * x * g[..., 2, 2])
    gy = 2.0 * (-2.0 * y * g[..., 0, 0] + x * g[..., 0, 1] + w * g[..., 0, 2]
                + x * g[..., 1, 0] + z * g[..., 1, 2] - w * g[..., 2, 0]
                + z * g[..., 2, 1] - 2.0 * y * g[..., 2, 2])
    gz = 2.0 * (-2.0 * z * g[..., 0, 0] - w * g[..., 0, 1] + x * g[..., 0, 2]
                + w * g[..., 1, 0] - 2.0 * z * g[..., 1, 1] + y * g[..., 1, 2]
                + x * g[..., 2, 0] + y * g[..., 2, 1])
    return np.stack([gw, gx, gy, gz], axis=-1)


def from_matrix(R: np.ndarray) -> np.ndarray:
    """Unit quaternion (w >= 0) of a single 3x3 rotation matrix."""
    R = np.asarray(R, dtype=np.float64)
    tr = np.trace(R)
    if tr > 0.0:
        s = 2.0 * np.sqrt(tr + 1.0)
        q = np.array([0.25 * s, (R[2, 1] - R[1, 2]) / s,
                      (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s])
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = 2.0 * np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = np.array([(R[2, 1] - R[1, 2]) / s, 0.25 * s,
                      (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s])
    elif R[1, 1] > R[2, 2]:
        s = 2.0 * np.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        q = np.array([(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s,
                      0.25 * s, (R[1, 2] + R[2, 1]) / s])
    else:
        s = 2.0 * np.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        q = np.array([(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s,
                      (R[1, 2] + R[2, 1]) / s, 0.25 * s])
    return canonicalize(normalize(q))


def multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product ``a * b`` (apply ``b`` first, then ``a``)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    aw, ax, ay, az = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    bw, bx, by, bz = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ], axis=-1)


def conjugate(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def from_axis_angle(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    half = 0.5 * angle
    return np.concatenate([[np.cos(half)], np.sin(half) * axis])


def to_axis_angle(q: np.ndarray) -> tuple[np.ndarray, float]:
    q = canonicalize(normalize(q))
    v = q[1:]
    s = np.linalg.norm(v)
    angle = 2.0 * np.arctan2(s, q[0])
    if s == 0.0:
        return np.array([1.0, 0.0, 0.0]), 0.0
    return v / s, float(angle)


def geodesic_angle(a: np.ndarray, b: np.ndarray) -> float:
    """Angle in ``[0, pi]`` of the rotation taking ``a`` to ``b``.

    Equal to ``2 * arccos(|<a, b>|)`` but evaluated through ``atan2`` so it
    stays accurate for nearly identical orientations.
    """
    rel = multiply(conjugate(normalize(a)), normalize(b))
    return float(2.0 * np.arctan2(np.linalg.norm(rel[1:]), abs(rel[0])))


def slerp(a: np.ndarray, b: np.ndarray, t: float) -> np.ndarray:
    a = normalize(a)
    b = normalize(b)
    if np.dot(a, b) < 0.0:
        b = -b
    rel = multiply(conjugate(a), b)
    axis, angle = to_axis_angle(rel)
    return normalize(multiply(a, from_axis_angle(axis, t * angle)))


def align_z(n: np.ndarray) -> np.ndarray:
    """Quaternion of the shortest rotation taking ``(0, 0, 1)`` onto unit ``n``."""
    n = np.asarray(n, dtype=np.float64)
    n = n / np.linalg.norm(n)
    axis = np.array([-n[1], n[0], 0.0])  # z x n
    s = np.linalg.norm(axis)
    if s < 1e-12:
        return np.array([1.0, 0.0, 0.0, 0.0]) if n[2] > 0 else np.array([0.0, 1.0, 0.0, 0.0])
    return from_axis_angle(axis / s, float(np.arctan2(s, n[2])))
