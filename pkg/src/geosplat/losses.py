"""Photometric, log-depth and normal losses with gradients w.r.t. the rendered maps."""

from __future__ import annotations

from functools import lru_cache
from typing import NamedTuple

import numpy as np

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2


class LossError(ValueError):
    pass


class DimensionMismatch(LossError):
    pass


class EmptyMask(LossError):
    pass


class LossGrad(NamedTuple):
    value: float
    grad: np.ndarray
    sign: np.ndarray | None = None


class NormalLoss(NamedTuple):
    align: float
    smooth: float
    value: float  # align + lambda_s * smooth
    grad: np.ndarray
    signs: tuple | None = None  # (align, row differences, column differences)


def _abs(x: np.ndarray, sign: np.ndarray | None):
    """``|x|`` and its branch, or ``sign * x`` when the branch is given.

    Fixing the branch gives a smooth function that agrees with ``|x|`` to
    first order wherever ``x != 0``; finite-difference checks use it so that
    a stencil straddling ``x = 0`` does not corrupt the estimate.
    """
    if sign is None:
        sign = np.sign(x)
        return np.abs(x), sign
    return sign * x, sign


def _reflect(j: int, n: int) -> int:
    if n == 1:
        return 0
    period = 2 * (n - 1)
    j = abs(j) % period
    return period - j if j >= n else j


@lru_cache(maxsize=64)
def filter_matrix(n: int, window: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    """1D Gaussian smoothing with reflect padding as an ``n x n`` matrix."""
    half = window // 2
    taps = np.exp(-((np.arange(window) - half) ** 2) / (2.0 * sigma ** 2))
    taps /= taps.sum()
    F = np.zeros((n, n))
    for i in range(n):
        for k in range(window):
            F[i, _reflect(i + k - half, n)] += taps[k]
    F.setflags(write=False)
    return F


def _blur(img: np.ndarray, Fh: np.ndarray, Fw: np.ndarray) -> np.ndarray:
    # Fh @ img[..., c] @ Fw.T per channel, as batched matmuls
    return (Fh @ img.transpose(2, 0, 1) @ Fw.T).transpose(1, 2, 0)


def _blur_adjoint(img: np.ndarray, Fh: np.ndarray, Fw: np.ndarray) -> np.ndarray:
    return (Fh.T @ img.transpose(2, 0, 1) @ Fw).transpose(1, 2, 0)


def ssim(x: np.ndarray, y: np.ndarray) -> LossGrad:
    """Mean SSIM over pixels and channels, with its gradient w.r.t. ``x``."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim == 2:
        x, y = x[..., None], y[..., None]
    H, W = x.shape[:2]
    Fh, Fw = filter_matrix(H), filter_matrix(W)
    mx, my = _blur(x, Fh, Fw), _blur(y, Fh, Fw)
    exx, eyy, exy = _blur(x * x, Fh, Fw), _blur(y * y, Fh, Fw), _blur(x * y, Fh, Fw)
    a1 = 2.0 * mx * my + SSIM_C1
    a2 = 2.0 * (exy - mx * my) + SSIM_C2
    b1 = mx * mx + my * my + SSIM_C1
    b2 = (exx - mx * mx) + (eyy - my * my) + SSIM_C2
    den = b1 * b2
    s = a1 * a2 / den
    count = s.size
    d_mx = (2.0 * my * a2 - 2.0 * my * a1 - s * (2.0 * mx * b2 - 2.0 * mx * b1)) / den
    d_exx = -s * b1 / den
    d_exy = 2.0 * a1 / den
    grad = (_blur_adjoint(d_mx, Fh, Fw) + 2.0 * x * _blur_adjoint(d_exx, Fh, Fw)
            + y * _blur_adjoint(d_exy, Fh, Fw)) / count
    return LossGrad(float(s.mean()), grad.reshape(x.shape))


def photometric_loss(rendered: np.ndarray, target: np.ndarray, lambda_ssim: float = 0.2,
                     sign: np.ndarray | None = None) -> LossGrad:
    """``(1 - l) * mean|r - t| + l * (1 - SSIM(r, t)) / 2``."""
    r = np.asarray(rendered, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if r.shape != t.shape:
        raise DimensionMismatch(f"{r.shape} vs {t.shape}")
    diff = r - t
    ad, sign = _abs(diff, sign)
    l1 = float(ad.mean())
    grad = (1.0 - lambda_ssim) * sign / diff.size
    value = (1.0 - lambda_ssim) * l1
    if lambda_ssim > 0:
        s = ssim(r, t)
        value += lambda_ssim * (1.0 - s.value) / 2.0
        grad = grad - 0.5 * lambda_ssim * s.grad
    return LossGrad(value, grad, sign)


def _check_mask(mask, shape) -> np.ndarray:
    mask = np.ones(shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if mask.shape != shape:
        raise DimensionMismatch(f"mask {mask.shape} vs {shape}")
    if not mask.any():
        raise EmptyMask("no supervised pixels")
    return mask


def depth_loss(pred: np.ndarray, target: np.ndarray, mask=None, sign: np.ndarray | None = None) -> LossGrad:
    """Mean of ``log(1 + |pred - target|)`` over the masked pixels."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise DimensionMismatch(f"{pred.shape} vs {target.shape}")
    mask = _check_mask(mask, pred.shape)
    m = int(mask.sum())
    diff = np.where(mask, pred - target, 0.0)
    ad, sign = _abs(diff, sign)
    value = float(np.log1p(ad).sum() / m)
    grad = sign / ((1.0 + ad) * m)
    return LossGrad(value, grad, sign)


def normal_loss(pred: np.ndarray, target: np.ndarray, lambda_s: float = 0.05, mask=None,
                signs: tuple | None = None, smooth_reduction: str = "mean") -> NormalLoss:
    """Masked mean L1 alignment plus ``lambda_s`` times total variation of ``pred``.

    The smoothness term adds absolute forward differences over all pixels and
    channels in both image directions, then divides by the pixel count
    (``smooth_reduction="mean"``) or not at all (``"sum"``). The mean keeps
    its scale independent of resolution.
    """
    if smooth_reduction not in ("mean", "sum"):
        raise ValueError(f"smooth_reduction must be 'mean' or 'sum', not {smooth_reduction!r}")
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise DimensionMismatch(f"{pred.shape} vs {target.shape}")
    mask = _check_mask(mask, pred.shape[:2])
    m = int(mask.sum())
    s_align, s_i, s_j = signs if signs is not None else (None, None, None)
    diff = np.where(mask[..., None], pred - target, 0.0)
    ad, s_align = _abs(diff, s_align)
    align = float(ad.sum() / m)
    grad = s_align / m

    adi, s_i = _abs(pred[1:] - pred[:-1], s_i)
    adj, s_j = _abs(pred[:, 1:] - pred[:, :-1], s_j)
    norm = pred.shape[0] * pred.shape[1] if smooth_reduction == "mean" else 1
    smooth = float((adi.sum() + adj.sum()) / norm)
    gi = s_i / norm
    gj = s_j / norm
    g_s = np.zeros_like(pred)
    g_s[1:] += gi
    g_s[:-1] -= gi
    g_s[:, 1:] += gj
    g_s[:, :-1] -= gj
    return NormalLoss(align, smooth, align + lambda_s * smooth, grad + lambda_s * g_s,
                      (s_align, s_i, s_j))
