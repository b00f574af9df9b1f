"""Gaussian scenes, projection, and CPU rendering of color, depth and normals.

Depth and normal maps are composited with the same front-to-back weights as
color, ``w_i = alpha_i * prod_{j<i} (1 - alpha_j)``, over a global depth
sort of the visible gaussians. Normals are the camera-space shortest axis of
each gaussian, flipped to point against the ray from the camera to the
gaussian's center, and are *not* renormalized after compositing.

The per-pixel falloff is the 2D Gaussian ``exp(-q/2)`` truncated at three
standard deviations (``q = 9``). To keep the objective differentiable at the
truncation boundary the tangent of ``exp(-q/2)`` at ``q = 9`` is subtracted
and the result rescaled to peak at 1, so value and slope both reach zero
there.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import backend, rotations
from ._raster_py import dfalloff, falloff
from .colmap_io import CameraIntrinsics, PoseRecord

__all__ = [
    "CameraPose", "Gaussian3D", "GaussianScene", "ProjectedGaussian", "RenderConfig",
    "RenderedFrame", "Culled", "project_gaussian", "gaussian_normal", "composite_pixel",
    "render", "render_with_context", "backward", "falloff", "dfalloff",
]

N_FEATURES = 7  # rgb, depth, normal xyz


class Culled(Exception):
    """Raised by :func:`project_gaussian` for gaussians outside the view volume."""


@dataclass(frozen=True)
class CameraPose:
    rotation: tuple  # unit quaternion (w, x, y, z), world -> camera
    center: tuple
    intrinsics: CameraIntrinsics
    near: float = 0.01
    far: float = 100.0

    def __post_init__(self):
        if not 0 < self.near < self.far:
            raise ValueError("need 0 < near < far")

    @property
    def R(self) -> np.ndarray:
        return rotations.to_matrix(rotations.normalize(np.array(self.rotation)))

    @property
    def t(self) -> np.ndarray:
        return -self.R @ np.array(self.center, dtype=np.float64)

    @property
    def width(self) -> int:
        return self.intrinsics.width

    @property
    def height(self) -> int:
        return self.intrinsics.height

    def viewing_direction(self) -> np.ndarray:
        """World-space direction of the camera's optical axis (+z)."""
        return self.R.T @ np.array([0.0, 0.0, 1.0])

    @classmethod
    def from_pose_record(cls, rec: PoseRecord, intrinsics: CameraIntrinsics, **kw) -> "CameraPose":
        return cls(tuple(rec.q), tuple(float(c) for c in rec.center), intrinsics, **kw)

    def to_pose_record(self, image_id: int, image_name: str, frame_index: int) -> PoseRecord:
        q = rotations.canonicalize(rotations.normalize(np.array(self.rotation)))
        return PoseRecord(image_id, tuple(float(v) for v in q), tuple(float(v) for v in self.t),
                          self.intrinsics.camera_id, image_name, frame_index)


@dataclass
class Gaussian3D:
    mean: np.ndarray
    log_scales: np.ndarray
    quat: np.ndarray
    opacity_logit: float
    color: np.ndarray

    @property
    def scales(self) -> np.ndarray:
        return np.exp(self.log_scales)

    @property
    def opacity(self) -> float:
        return float(1.0 / (1.0 + np.exp(-self.opacity_logit)))

    @property
    def rotation(self) -> np.ndarray:
        return rotations.to_matrix(rotations.normalize(self.quat))


@dataclass
class GaussianScene:
    """Struct-of-arrays gaussian scene in optimization parameterization."""

    means: np.ndarray
    log_scales: np.ndarray
    quats: np.ndarray
    opacity_logits: np.ndarray
    colors: np.ndarray

    GROUPS = ("means", "log_scales", "quats", "opacity_logits", "colors")

    def __post_init__(self):
        n = len(self.means)
        self.means = np.asarray(self.means, dtype=np.float64).reshape(n, 3)
        self.log_scales = np.asarray(self.log_scales, dtype=np.float64).reshape(n, 3)
        self.quats = np.asarray(self.quats, dtype=np.float64).reshape(n, 4)
        self.opacity_logits = np.asarray(self.opacity_logits, dtype=np.float64).reshape(n)
        self.colors = np.asarray(self.colors, dtype=np.float64).reshape(n, 3)

    def __len__(self) -> int:
        return len(self.means)

    @classmethod
    def empty(cls) -> "GaussianScene":
        return cls(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros((0, 4)), np.zeros(0), np.zeros((0, 3)))

    @classmethod
    def from_gaussians(cls, gaussians: Sequence[Gaussian3D]) -> "GaussianScene":
        if not gaussians:
            return cls.empty()
        return cls(
            np.array([g.mean for g in gaussians]),
            np.array([g.log_scales for g in gaussians]),
            np.array([g.quat for g in gaussians]),
            np.array([g.opacity_logit for g in gaussians]),
            np.array([g.color for g in gaussians]),
        )

    def gaussian(self, i: int) -> Gaussian3D:
        return Gaussian3D(self.means[i].copy(), self.log_scales[i].copy(), self.quats[i].copy(),
                          float(self.opacity_logits[i]), self.colors[i].copy())

    def copy(self) -> "GaussianScene":
        return GaussianScene(*(getattr(self, g).copy() for g in self.GROUPS))

    def params(self) -> dict[str, np.ndarray]:
        return {g: getattr(self, g) for g in self.GROUPS}

    def normalize_quats(self) -> None:
        self.quats = rotations.normalize(self.quats)


@dataclass(frozen=True)
class RenderConfig:
    cov_blur: float = 0.3  # px^2 added to the 2D covariance diagonal
    t_min: float = 1e-4  # early-termination transmittance; 0 disables
    guard: float = 1.3  # frustum guard band, multiple of the half field of view
    threads: int = 1
    backend: str | None = None  # "compiled", "python" or None for the default


@dataclass
class RenderedFrame:
    color: np.ndarray
    depth: np.ndarray
    normal: np.ndarray
    alpha: np.ndarray

    @classmethod
    def background(cls, height: int, width: int) -> "RenderedFrame":
        return cls(np.zeros((height, width, 3)), np.zeros((height, width)),
                   np.zeros((height, width, 3)), np.zeros((height, width)))


@dataclass
class ProjectedGaussian:
    mean2d: np.ndarray
    cov2d: np.ndarray
    depth: float


def _jacobian(t_cam: np.ndarray, fx: float, fy: float) -> np.ndarray:
    x, y, z = t_cam[..., 0], t_cam[..., 1], t_cam[..., 2]
    J = np.zeros(t_cam.shape[:-1] + (2, 3))
    J[..., 0, 0] = fx / z
    J[..., 0, 2] = -fx * x / (z * z)
    J[..., 1, 1] = fy / z
    J[..., 1, 2] = -fy * y / (z * z)
    return J


def project_gaussian(g: Gaussian3D, cam: CameraPose, cov_blur: float = 0.3,
                     guard: float = 1.3) -> ProjectedGaussian:
    """Pinhole projection of one gaussian with the EWA covariance linearization."""
    K = cam.intrinsics
    W = cam.R
    t_cam = W @ (np.asarray(g.mean, dtype=np.float64) - np.array(cam.center))
    z = t_cam[2]
    if not cam.near < z < cam.far:
        raise Culled(f"depth {z:.6g} outside ({cam.near}, {cam.far})")
    if (abs(t_cam[0] / z) > guard * 0.5 * K.width / K.fx
            or abs(t_cam[1] / z) > guard * 0.5 * K.height / K.fy):
        raise Culled("outside the frustum guard band")
    mean2d = np.array([K.fx * t_cam[0] / z + K.cx, K.fy * t_cam[1] / z + K.cy])
    R = g.rotation
    cov3 = R @ np.diag(g.scales ** 2) @ R.T
    M = _jacobian(t_cam, K.fx, K.fy) @ W
    cov2d = M @ cov3 @ M.T + cov_blur * np.eye(2)
    return ProjectedGaussian(mean2d, cov2d, float(z))


def _normal_axis(log_scales: np.ndarray) -> np.ndarray:
    # argmin returns the first minimum, i.e. ties go to the lowest index
    return np.argmin(log_scales, axis=-1)


def gaussian_normal(g: Gaussian3D, cam: CameraPose) -> np.ndarray:
    """Camera-space shortest axis of ``g``, oriented against the ray to its center."""
    k = int(_normal_axis(np.asarray(g.log_scales)))
    n = cam.R @ g.rotation[:, k]
    if n @ (cam.R @ (np.asarray(g.mean) - np.array(cam.center))) > 0:
        n = -n
    return n


def composite_pixel(splats, t_min: float = 1e-4):
    """Front-to-back compositing of ``(alpha, color, depth, normal)`` tuples.

    Returns ``(color, depth, normal, alpha)`` accumulated with weights
    ``alpha_i * T_i``; stops once transmittance drops below ``t_min``.
    """
    color = np.zeros(3)
    normal = np.zeros(3)
    depth = 0.0
    acc = 0.0
    T = 1.0
    for a, c, d, n in splats:
        w = a * T
        color = color + w * np.asarray(c, dtype=np.float64)
        depth += w * d
        normal = normal + w * np.asarray(n, dtype=np.float64)
        acc += w
        T *= 1.0 - a
        if T < t_min:
            break
    return color, depth, normal, acc


@dataclass
class Projection:
    """Visible gaussians of one view, sorted front to back, plus backward cache."""

    index: np.ndarray
    mean2d: np.ndarray
    cov2d: np.ndarray
    conic: np.ndarray
    depth: np.ndarray
    normal: np.ndarray
    opacity: np.ndarray
    bbox: np.ndarray
    cache: dict = field(default_factory=dict, repr=False)


def project_scene(scene: GaussianScene, cam: CameraPose, config: RenderConfig = RenderConfig()) -> Projection:
    K = cam.intrinsics
    Wc = cam.R
    n = len(scene)
    t_cam = (scene.means - np.array(cam.center)) @ Wc.T
    z = t_cam[:, 2] if n else np.zeros(0)
    with np.errstate(divide="ignore", invalid="ignore"):
        keep = (z > cam.near) & (z < cam.far)
        keep &= np.abs(t_cam[:, 0] / z) <= config.guard * 0.5 * K.width / K.fx
        keep &= np.abs(t_cam[:, 1] / z) <= config.guard * 0.5 * K.height / K.fy

    idx = np.nonzero(keep)[0]
    t_cam = t_cam[idx]
    z = t_cam[:, 2]
    qn = np.linalg.norm(scene.quats[idx], axis=1)
    qu = scene.quats[idx] / qn[:, None]
    R = rotations.to_matrix(qu)
    scales = np.exp(scene.log_scales[idx])
    s2 = scales ** 2
    cov3 = np.einsum("nij,nj,nkj->nik", R, s2, R)
    J = _jacobian(t_cam, K.fx, K.fy)
    M = J @ Wc
    cov2d = M @ cov3 @ np.swapaxes(M, 1, 2) + config.cov_blur * np.eye(2)
    A, B, C = cov2d[:, 0, 0], cov2d[:, 0, 1], cov2d[:, 1, 1]
    det = A * C - B * B
    conic = np.stack([C / det, -B / det, A / det], axis=1)
    mean2d = np.stack([K.fx * t_cam[:, 0] / z + K.cx, K.fy * t_cam[:, 1] / z + K.cy], axis=1)

    axis = _normal_axis(scene.log_scales[idx])
    r_axis = R[np.arange(len(idx)), :, axis]
    n_cam = r_axis @ Wc.T
    # face the camera along the viewing ray, not the optical axis, so
    # surfaces seen edge-on do not flip under tiny rotations
    sign = np.where(np.sum(n_cam * t_cam, axis=1) > 0, -1.0, 1.0)
    n_cam = n_cam * sign[:, None]

    # pixel x with center x + 0.5 lies in [u - ex, u + ex]
    ex = 3.0 * np.sqrt(A)
    ey = 3.0 * np.sqrt(C)
    bbox = np.stack([
        np.ceil(mean2d[:, 0] - ex - 0.5), np.floor(mean2d[:, 0] + ex - 0.5),
        np.ceil(mean2d[:, 1] - ey - 0.5), np.floor(mean2d[:, 1] + ey - 0.5),
    ], axis=1)
    bbox[:, 0] = np.maximum(bbox[:, 0], 0)
    bbox[:, 1] = np.minimum(bbox[:, 1], K.width - 1)
    bbox[:, 2] = np.maximum(bbox[:, 2], 0)
    bbox[:, 3] = np.minimum(bbox[:, 3], K.height - 1)
    covers = (bbox[:, 0] <= bbox[:, 1]) & (bbox[:, 2] <= bbox[:, 3])

    order = np.argsort(z, kind="stable")
    order = order[covers[order]]
    opacity = 1.0 / (1.0 + np.exp(-scene.opacity_logits[idx]))

    per_gaussian = dict(t_cam=t_cam, qn=qn, qu=qu, R=R, scales=scales, cov3=cov3, J=J, M=M,
                        axis=axis, sign=sign, opacity=opacity)
    cache = {k: v[order] for k, v in per_gaussian.items()}
    cache.update(Wc=Wc, fx=K.fx, fy=K.fy)
    return Projection(
        index=idx[order],
        mean2d=np.ascontiguousarray(mean2d[order]),
        cov2d=cov2d[order],
        conic=np.ascontiguousarray(conic[order]),
        depth=z[order],
        normal=n_cam[order],
        opacity=np.ascontiguousarray(opacity[order]),
        bbox=np.ascontiguousarray(bbox[order].astype(np.int32)),
        cache=cache,
    )


@dataclass
class RenderContext:
    scene_size: int
    cam: CameraPose
    config: RenderConfig
    proj: Projection
    feats: np.ndarray


def render_with_context(scene: GaussianScene, cam: CameraPose,
                        config: RenderConfig = RenderConfig()) -> tuple[RenderedFrame, RenderContext]:
    H, W = cam.height, cam.width
    proj = project_scene(scene, cam, config)
    colors = scene.colors[proj.index]
    feats = np.ascontiguousarray(np.concatenate([colors, proj.depth[:, None], proj.normal], axis=1))
    kern = backend.get(config.backend)
    out, alpha = kern.forward(proj.mean2d, proj.conic, proj.opacity, feats, proj.bbox,
                              H, W, float(config.t_min), int(config.threads))
    frame = RenderedFrame(out[..., 0:3], out[..., 3], out[..., 4:7], alpha)
    return frame, RenderContext(len(scene), cam, config, proj, feats)


def render(scene: GaussianScene, cam: CameraPose, config: RenderConfig = RenderConfig()) -> RenderedFrame:
    """Render color, depth, normal and accumulated alpha for one camera."""
    return render_with_context(scene, cam, config)[0]


def backward(ctx: RenderContext, grad_color=None, grad_depth=None, grad_normal=None,
             grad_alpha=None) -> dict[str, np.ndarray]:
    """Gradients of a scalar loss w.r.t. every scene parameter group.

    The ``grad_*`` arguments are the loss gradients w.r.t. the rendered maps;
    ``None`` means zero.
    """
    cam, cfg, proj = ctx.cam, ctx.config, ctx.proj
    H, W = cam.height, cam.width
    N = ctx.scene_size
    grads = {
        "means": np.zeros((N, 3)), "log_scales": np.zeros((N, 3)), "quats": np.zeros((N, 4)),
        "opacity_logits": np.zeros(N), "colors": np.zeros((N, 3)),
    }
    K = len(proj.index)
    if K == 0:
        return grads
    g_out = np.zeros((H, W, N_FEATURES))
    if grad_color is not None:
        g_out[..., 0:3] = grad_color
    if grad_depth is not None:
        g_out[..., 3] = grad_depth
    if grad_normal is not None:
        g_out[..., 4:7] = grad_normal
    g_alpha = np.zeros((H, W)) if grad_alpha is None else np.ascontiguousarray(grad_alpha, dtype=np.float64)

    kern = backend.get(cfg.backend)
    g_mean2d, g_conic, g_opac, g_feat = kern.backward(
        proj.mean2d, proj.conic, proj.opacity, ctx.feats, proj.bbox, H, W,
        float(cfg.t_min), np.ascontiguousarray(g_out), g_alpha, int(cfg.threads))

    c = proj.cache
    idx = proj.index
    Wc, fx, fy = c["Wc"], c["fx"], c["fy"]
    t_cam, R, scales, M, cov3 = c["t_cam"], c["R"], c["scales"], c["M"], c["cov3"]
    x, y, z = t_cam[:, 0], t_cam[:, 1], t_cam[:, 2]

    grads["colors"][idx] = g_feat[:, 0:3]
    o = c["opacity"]
    grads["opacity_logits"][idx] = g_opac * o * (1.0 - o)

    # conic (a, b, c) -> symmetric gradient matrix in tr(G dK) form
    GK = np.empty((K, 2, 2))
    GK[:, 0, 0] = g_conic[:, 0]
    GK[:, 0, 1] = GK[:, 1, 0] = 0.5 * g_conic[:, 1]
    GK[:, 1, 1] = g_conic[:, 2]
    conic_m = np.empty((K, 2, 2))
    conic_m[:, 0, 0] = proj.conic[:, 0]
    conic_m[:, 0, 1] = conic_m[:, 1, 0] = proj.conic[:, 1]
    conic_m[:, 1, 1] = proj.conic[:, 2]
    G_cov2d = -conic_m @ GK @ conic_m
    G_M = 2.0 * G_cov2d @ M @ cov3
    G_cov3 = np.swapaxes(M, 1, 2) @ G_cov2d @ M
    G_J = G_M @ Wc.T

    g_t = np.zeros((K, 3))
    # mean2d
    g_t[:, 0] += g_mean2d[:, 0] * fx / z
    g_t[:, 1] += g_mean2d[:, 1] * fy / z
    g_t[:, 2] += -g_mean2d[:, 0] * fx * x / z ** 2 - g_mean2d[:, 1] * fy * y / z ** 2
    # Jacobian entries
    g_t[:, 0] += G_J[:, 0, 2] * (-fx / z ** 2)
    g_t[:, 1] += G_J[:, 1, 2] * (-fy / z ** 2)
    g_t[:, 2] += (G_J[:, 0, 0] * (-fx / z ** 2) + G_J[:, 0, 2] * (2.0 * fx * x / z ** 3)
                  + G_J[:, 1, 1] * (-fy / z ** 2) + G_J[:, 1, 2] * (2.0 * fy * y / z ** 3))
    # depth feature is the camera-space z
    g_t[:, 2] += g_feat[:, 3]
    grads["means"][idx] = g_t @ Wc

    s2 = scales ** 2
    G_R = 2.0 * G_cov3 @ R * s2[:, None, :]
    RtGR = np.swapaxes(R, 1, 2) @ G_cov3 @ R
    diag = np.einsum("nii->ni", RtGR)
    grads["log_scales"][idx] = 2.0 * s2 * diag

    # normal: n = sign * Wc @ R[:, axis]
    g_axis = (g_feat[:, 4:7] @ Wc) * c["sign"][:, None]
    G_R[np.arange(K), :, c["axis"]] += g_axis

    g_qu = rotations.matrix_grad_to_quat(c["qu"], G_R)
    qu = c["qu"]
    g_q = (g_qu - qu * np.sum(qu * g_qu, axis=1, keepdims=True)) / c["qn"][:, None]
    grads["quats"][idx] = g_q
    return grads
