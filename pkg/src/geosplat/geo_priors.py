"""Monocular depth/normal priors: file container, stub estimator, affine alignment.

Monocular depth is only defined up to an unknown scale and shift. Each
image's prior is brought into the scale of the rendered depth with a
closed-form least-squares affine fit.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"WVDM"
_HEADER = struct.Struct("<4sIII")
NORMAL_TOLERANCE = 1e-4
MIN_VARIANCE = 1e-12


class PriorError(ValueError):
    pass


class BadMagic(PriorError):
    pass


class DimensionMismatch(PriorError):
    pass


class NonUnitNormals(PriorError):
    pass


class DegenerateRegression(PriorError):
    pass


class TooFewInliers(PriorError):
    pass


class Source(str, enum.Enum):
    PRIOR = "Prior"
    RENDERED = "Rendered"


class Direction(str, enum.Enum):
    """Which map plays the regressor.

    ``PRIOR_TO_RENDER`` fits ``a * prior + b ~ rendered`` so the aligned
    prior carries the scene's scale. ``RENDER_TO_PRIOR`` fits
    ``a * rendered + b ~ prior``; the aligned prior is then ``(prior - b) / a``.
    """

    PRIOR_TO_RENDER = "prior_to_render"
    RENDER_TO_PRIOR = "render_to_prior"


@dataclass
class DepthMap:
    values: np.ndarray  # (H, W); 0 marks invalid pixels
    source: Source = Source.PRIOR

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.ndim != 2 or self.values.size == 0:
            raise DimensionMismatch("depth map must be a non-empty H x W array")
        if not np.all(np.isfinite(self.values)):
            raise PriorError("depth map contains non-finite values")

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def valid(self) -> np.ndarray:
        return self.values > 0

    def __eq__(self, other):
        return (isinstance(other, DepthMap) and self.values.shape == other.values.shape
                and np.array_equal(self.values, other.values))


@dataclass
class NormalMap:
    values: np.ndarray  # (H, W, 3); zero vectors mark invalid pixels

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.ndim != 3 or self.values.shape[2] != 3 or self.values.size == 0:
            raise DimensionMismatch("normal map must be a non-empty H x W x 3 array")
        if not np.all(np.isfinite(self.values)):
            raise PriorError("normal map contains non-finite values")

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def valid(self) -> np.ndarray:
        return np.any(self.values != 0, axis=2)

    def check_unit(self, max_bad_fraction: float = 0.01) -> None:
        valid = self.valid
        if not valid.any():
            return
        norms = np.linalg.norm(self.values[valid].astype(np.float64), axis=1)
        bad = np.abs(norms - 1.0) > NORMAL_TOLERANCE
        if bad.mean() > max_bad_fraction:
            raise NonUnitNormals(f"{bad.sum()} of {bad.size} valid normals are not unit length")

    def __eq__(self, other):
        return (isinstance(other, NormalMap) and self.values.shape == other.values.shape
                and np.array_equal(self.values, other.values))


@dataclass(frozen=True)
class AffineFit:
    a: float
    b: float
    inlier_count: int
    residual_rms: float
    direction: Direction = Direction.PRIOR_TO_RENDER

    def aligned_prior(self, prior: np.ndarray) -> np.ndarray:
        """Prior depth expressed in rendered-depth units."""
        if self.direction == Direction.PRIOR_TO_RENDER:
            return self.a * prior + self.b
        return (prior - self.b) / self.a


def _values(m) -> np.ndarray:
    return np.asarray(m.values if isinstance(m, (DepthMap, NormalMap)) else m, dtype=np.float64)


def align_scale_shift(d_prior, d_render, mask=None,
                      direction: Direction = Direction.PRIOR_TO_RENDER) -> AffineFit:
    """Least-squares affine fit between prior and rendered depth over ``mask``.

    Only pixels where ``mask`` holds and the prior is positive take part.
    Solves the 2x2 normal equations in centered form.
    """
    prior = _values(d_prior)
    rendered = _values(d_render)
    if prior.shape != rendered.shape:
        raise DimensionMismatch(f"{prior.shape} vs {rendered.shape}")
    sel = prior > 0
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != prior.shape:
            raise DimensionMismatch("mask shape differs from the depth maps")
        sel &= mask
    direction = Direction(direction)
    if direction == Direction.PRIOR_TO_RENDER:
        x, y = prior[sel], rendered[sel]
    else:
        x, y = rendered[sel], prior[sel]
    n = int(x.size)
    if n < 2:
        raise TooFewInliers(f"{n} inlier pixels")
    xm, ym = x.mean(), y.mean()
    dx = x - xm
    var = float(np.mean(dx * dx))
    if var < MIN_VARIANCE:
        raise DegenerateRegression(f"regressor variance {var:.3g}")
    a = float(np.mean(dx * (y - ym)) / var)
    b = float(ym - a * xm)
    resid = a * x + b - y
    return AffineFit(a, b, n, float(np.sqrt(np.mean(resid * resid))), direction)


def apply_affine(d: DepthMap, fit: AffineFit) -> DepthMap:
    """``a * value + b`` on valid pixels; results <= 0 become invalid (0)."""
    v = _values(d)
    valid = v > 0
    out = np.where(valid, fit.a * v + fit.b, 0.0)
    out = np.where(out > 0, out, 0.0)
    return DepthMap(out, Source.PRIOR)


def prior_to_bytes(m) -> bytes:
    v = np.asarray(m.values, dtype="<f4")
    channels = 1 if v.ndim == 2 else v.shape[2]
    if channels not in (1, 3):
        raise DimensionMismatch(f"{channels} channels")
    return _HEADER.pack(MAGIC, v.shape[1], v.shape[0], channels) + v.tobytes(order="C")


def prior_from_bytes(blob: bytes, strict: bool = True):
    """Decode a WVDM blob; ``strict`` rejects normal maps that are not unit length."""
    if len(blob) < _HEADER.size:
        raise BadMagic("file too short for a WVDM header")
    magic, width, height, channels = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise BadMagic(f"magic {magic!r}")
    if channels not in (1, 3):
        raise DimensionMismatch(f"{channels} channels")
    expected = width * height * channels * 4
    if len(blob) - _HEADER.size != expected:
        raise DimensionMismatch(f"expected {expected} data bytes, got {len(blob) - _HEADER.size}")
    v = np.frombuffer(blob, dtype="<f4", offset=_HEADER.size).astype(np.float32)
    if channels == 1:
        return DepthMap(v.reshape(height, width))
    nm = NormalMap(v.reshape(height, width, 3))
    if strict:
        nm.check_unit()
    return nm


def store_prior(path, m) -> None:
    Path(path).write_bytes(prior_to_bytes(m))


def load_prior(path, strict: bool = True):
    return prior_from_bytes(Path(path).read_bytes(), strict)


def stub_estimate(frame: np.ndarray, scene_oracle=None, distortion=(1.0, 0.0), noise: float = 0.0,
                  rng: np.random.Generator | None = None, alpha_threshold: float = 0.5):
    """Deterministic stand-in for monocular depth and normal estimators.

    With ``scene_oracle`` (anything with ``depth``, ``normal`` and ``alpha``
    maps, e.g. a render of the ground-truth scene) the result is its
    composited depth mapped through ``distortion = (a0, b0)`` plus Gaussian
    noise, and the true normals renormalized. Pixels with alpha at or below
    ``alpha_threshold`` are invalid. Without an oracle a horizontal depth ramp
    and camera-facing normals are returned.
    """
    H, W = np.asarray(frame).shape[:2]
    if scene_oracle is None:
        ramp = 1.0 + np.arange(W, dtype=np.float64) / W
        depth = np.tile(ramp, (H, 1))
        normal = np.zeros((H, W, 3))
        normal[..., 2] = -1.0
        return DepthMap(depth), NormalMap(normal)
    a0, b0 = distortion
    alpha = np.asarray(scene_oracle.alpha, dtype=np.float64)
    valid = alpha > alpha_threshold
    depth = a0 * np.asarray(scene_oracle.depth, dtype=np.float64) + b0
    if noise > 0:
        rng = rng if rng is not None else np.random.default_rng(0)
        depth = depth + rng.normal(0.0, noise, depth.shape)
    valid &= depth > 0
    depth = np.where(valid, depth, 0.0)
    n = np.asarray(scene_oracle.normal, dtype=np.float64)
    norms = np.linalg.norm(n, axis=2, keepdims=True)
    valid_n = valid & (norms[..., 0] > 1e-8)
    normal = np.where(valid_n[..., None], n / np.maximum(norms, 1e-12), 0.0)
    return DepthMap(depth), NormalMap(normal)
