# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled per-pixel compositing kernels.

Splats arrive sorted front to back. Pixel centers sit at ``(x + 0.5, y + 0.5)``.
Rows are processed independently; the backward pass writes one gradient
buffer per row, summed afterwards in row order so results do not depend on
the number of threads.
"""

import numpy as np
cimport numpy as cnp
from cython.parallel cimport prange
from libc.math cimport exp
from libc.stdlib cimport malloc, free

cnp.import_array()

cdef double E45 = exp(-4.5)
cdef double NORM = 1.0 - 5.5 * exp(-4.5)

# per-gaussian gradient slots: u, v, conic a, b, c, opacity, then features
DEF NG = 6


cdef inline double falloff(double q) noexcept nogil:
    if q >= 9.0:
        return 0.0
    return (exp(-0.5 * q) - E45 * (1.0 - 0.5 * (q - 9.0))) / NORM


cdef inline double dfalloff(double q) noexcept nogil:
    if q >= 9.0:
        return 0.0
    return (-0.5 * exp(-0.5 * q) + 0.5 * E45) / NORM


cdef void _forward_row(
    int y, int W, int K, int F,
    const double[:, ::1] mean2d, const double[:, ::1] conic,
    const double[::1] opacity, const double[:, ::1] feats, const int[:, ::1] bbox,
    double t_min, double[:, :, ::1] out, double[:, ::1] alpha,
) noexcept nogil:
    cdef int x, i, f
    cdef double px, py, dx, dy, q, a, T
    py = y + 0.5
    for x in range(W):
        px = x + 0.5
        T = 1.0
        for i in range(K):
            if x < bbox[i, 0] or x > bbox[i, 1] or y < bbox[i, 2] or y > bbox[i, 3]:
                continue
            dx = px - mean2d[i, 0]
            dy = py - mean2d[i, 1]
            q = conic[i, 0] * dx * dx + 2.0 * conic[i, 1] * dx * dy + conic[i, 2] * dy * dy
            a = opacity[i] * falloff(q)
            if a <= 0.0:
                continue
            for f in range(F):
                out[y, x, f] += a * T * feats[i, f]
            alpha[y, x] += a * T
            T = T * (1.0 - a)
            if T < t_min:
                break


def forward(
    const double[:, ::1] mean2d, const double[:, ::1] conic, const double[::1] opacity,
    const double[:, ::1] feats, const int[:, ::1] bbox,
    int H, int W, double t_min, int threads=1,
):
    cdef int K = mean2d.shape[0]
    cdef int F = feats.shape[1]
    out_np = np.zeros((H, W, F), dtype=np.float64)
    alpha_np = np.zeros((H, W), dtype=np.float64)
    cdef double[:, :, ::1] out = out_np
    cdef double[:, ::1] alpha = alpha_np
    cdef int y
    with nogil:
        for y in prange(H, num_threads=max(threads, 1), schedule="static"):
            _forward_row(y, W, K, F, mean2d, conic, opacity, feats, bbox, t_min, out, alpha)
    return out_np, alpha_np


cdef void _backward_row(
    int y, int W, int K, int F,
    const double[:, ::1] mean2d, const double[:, ::1] conic,
    const double[::1] opacity, const double[:, ::1] feats, const int[:, ::1] bbox,
    double t_min, const double[:, :, ::1] grad_out, const double[:, ::1] grad_alpha,
    double[:, :, ::1] grads,
) noexcept nogil:
    cdef int x, i, k, f, n
    cdef double px, py, dx, dy, q, a, T, S, gF, w, da, dq
    cdef int* idx = <int*> malloc(K * sizeof(int))
    cdef double* al = <double*> malloc(K * sizeof(double))
    cdef double* tr = <double*> malloc(K * sizeof(double))
    cdef double* qs = <double*> malloc(K * sizeof(double))
    py = y + 0.5
    for x in range(W):
        px = x + 0.5
        T = 1.0
        n = 0
        for i in range(K):
            if x < bbox[i, 0] or x > bbox[i, 1] or y < bbox[i, 2] or y > bbox[i, 3]:
                continue
            dx = px - mean2d[i, 0]
            dy = py - mean2d[i, 1]
            q = conic[i, 0] * dx * dx + 2.0 * conic[i, 1] * dx * dy + conic[i, 2] * dy * dy
            a = opacity[i] * falloff(q)
            if a <= 0.0:
                continue
            idx[n] = i
            al[n] = a
            tr[n] = T
            qs[n] = q
            n = n + 1
            T = T * (1.0 - a)
            if T < t_min:
                break
        S = 0.0
        for k in range(n - 1, -1, -1):
            i = idx[k]
            a = al[k]
            w = a * tr[k]
            gF = grad_alpha[y, x]
            for f in range(F):
                gF = gF + grad_out[y, x, f] * feats[i, f]
                grads[y, i, NG + f] += w * grad_out[y, x, f]
            da = tr[k] * gF - S / (1.0 - a)
            S = S + w * gF
            grads[y, i, 5] += da * falloff(qs[k])
            dq = da * opacity[i] * dfalloff(qs[k])
            dx = px - mean2d[i, 0]
            dy = py - mean2d[i, 1]
            grads[y, i, 0] += -dq * 2.0 * (conic[i, 0] * dx + conic[i, 1] * dy)
            grads[y, i, 1] += -dq * 2.0 * (conic[i, 1] * dx + conic[i, 2] * dy)
            grads[y, i, 2] += dq * dx * dx
            grads[y, i, 3] += dq * 2.0 * dx * dy
            grads[y, i, 4] += dq * dy * dy
    free(idx)
    free(al)
    free(tr)
    free(qs)


def backward(
    const double[:, ::1] mean2d, const double[:, ::1] conic, const double[::1] opacity,
    const double[:, ::1] feats, const int[:, ::1] bbox,
    int H, int W, double t_min,
    const double[:, :, ::1] grad_out, const double[:, ::1] grad_alpha, int threads=1,
):
    cdef int K = mean2d.shape[0]
    cdef int F = feats.shape[1]
    grads_np = np.zeros((H, K, NG + F), dtype=np.float64)
    cdef double[:, :, ::1] grads = grads_np
    cdef int y
    if K > 0:
        with nogil:
            for y in prange(H, num_threads=max(threads, 1), schedule="static"):
                _backward_row(y, W, K, F, mean2d, conic, opacity, feats, bbox, t_min,
                              grad_out, grad_alpha, grads)
    total = np.zeros((K, NG + F), dtype=np.float64)
    for y in range(H):
        total += grads_np[y]
    return total[:, 0:2].copy(), total[:, 2:5].copy(), total[:, 5].copy(), total[:, NG:].copy()
