"""Pure-numpy compositing kernels, used when the compiled module is absent.

Same contract as the compiled ``_raster`` module: splats sorted front to
back, pixel centers at ``(x + 0.5, y + 0.5)``. Work is vectorized over a
block of rows times all splats.
"""

from __future__ import annotations

import numpy as np

E45 = np.exp(-4.5)
NORM = 1.0 - 5.5 * E45
_ROWS_PER_BLOCK = 16


def falloff(q):
    q = np.asarray(q, dtype=np.float64)
    return np.where(q < 9.0, (np.exp(-0.5 * q) - E45 * (1.0 - 0.5 * (q - 9.0))) / NORM, 0.0)


def dfalloff(q):
    q = np.asarray(q, dtype=np.float64)
    return np.where(q < 9.0, (-0.5 * np.exp(-0.5 * q) + 0.5 * E45) / NORM, 0.0)


def _block_alpha(y0, y1, W, mean2d, conic, opacity, bbox):
    ys, xs = np.mgrid[y0:y1, 0:W]
    ys = ys.reshape(-1, 1)
    xs = xs.reshape(-1, 1)
    dx = (xs + 0.5) - mean2d[None, :, 0]
    dy = (ys + 0.5) - mean2d[None, :, 1]
    q = conic[None, :, 0] * dx * dx + 2.0 * conic[None, :, 1] * dx * dy + conic[None, :, 2] * dy * dy
    inside = ((xs >= bbox[None, :, 0]) & (xs <= bbox[None, :, 1])
              & (ys >= bbox[None, :, 2]) & (ys <= bbox[None, :, 3]))
    q = np.where(inside, q, 9.0)
    a = opacity[None, :] * falloff(q)
    return a, q, dx, dy


def _transmittance(a, t_min):
    one_minus = 1.0 - a
    T = np.ones_like(a)
    if a.shape[1] > 1:
        T[:, 1:] = np.cumprod(one_minus[:, :-1], axis=1)
    active = T >= t_min
    # once inactive, a pixel stays inactive
    active = np.cumprod(active, axis=1).astype(bool)
    return T, active


def forward(mean2d, conic, opacity, feats, bbox, H, W, t_min, threads=1):
    K, F = feats.shape
    out = np.zeros((H, W, F))
    alpha = np.zeros((H, W))
    if K == 0:
        return out, alpha
    for y0 in range(0, H, _ROWS_PER_BLOCK):
        y1 = min(H, y0 + _ROWS_PER_BLOCK)
        a, _, _, _ = _block_alpha(y0, y1, W, mean2d, conic, opacity, bbox)
        T, active = _transmittance(a, t_min)
        w = np.where(active, a * T, 0.0)
        out[y0:y1] = (w @ feats).reshape(y1 - y0, W, F)
        alpha[y0:y1] = w.sum(axis=1).reshape(y1 - y0, W)
    return out, alpha


def backward(mean2d, conic, opacity, feats, bbox, H, W, t_min, grad_out, grad_alpha, threads=1):
    K, F = feats.shape
    g_mean2d = np.zeros((K, 2))
    g_conic = np.zeros((K, 3))
    g_opacity = np.zeros(K)
    g_feats = np.zeros((K, F))
    if K == 0:
        return g_mean2d, g_conic, g_opacity, g_feats
    for y0 in range(0, H, _ROWS_PER_BLOCK):
        y1 = min(H, y0 + _ROWS_PER_BLOCK)
        a, q, dx, dy = _block_alpha(y0, y1, W, mean2d, conic, opacity, bbox)
        T, active = _transmittance(a, t_min)
        a = np.where(active, a, 0.0)
        w = a * T
        G = grad_out[y0:y1].reshape(-1, F)
        gF = G @ feats.T + grad_alpha[y0:y1].reshape(-1, 1)
        wg = w * gF
        # sum over later splats k > i
        S = np.cumsum(wg[:, ::-1], axis=1)[:, ::-1] - wg
        da = np.where(active, T * gF - S / (1.0 - a), 0.0)
        g_feats += w.T @ G
        g_opacity += np.sum(da * falloff(q), axis=0)
        dq = da * opacity[None, :] * dfalloff(q)
        g_mean2d[:, 0] += np.sum(-dq * 2.0 * (conic[None, :, 0] * dx + conic[None, :, 1] * dy), axis=0)
        g_mean2d[:, 1] += np.sum(-dq * 2.0 * (conic[None, :, 1] * dx + conic[None, :, 2] * dy), axis=0)
        g_conic[:, 0] += np.sum(dq * dx * dx, axis=0)
        g_conic[:, 1] += np.sum(dq * 2.0 * dx * dy, axis=0)
        g_conic[:, 2] += np.sum(dq * dy * dy, axis=0)
    return g_mean2d, g_conic, g_opacity, g_feats
