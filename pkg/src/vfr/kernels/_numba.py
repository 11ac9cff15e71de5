"""Numba twins of the kernels in ``_numpy``."""

import math

import numpy as np

from .._jit import njit

PRIME_Y = 2654435761
PRIME_Z = 805459861


@njit
def _cell(coord, res):
    pos = np.float64(coord) * res
    c = np.floor(pos)
    if c < 0.0:
        c = 0.0
    elif c > res - 1:
        c = res - 1.0
    return np.int64(c), pos - c


@njit
def grid_encode(points, table, offsets, resolutions, hashed, table_size):
    n = points.shape[0]
    n_levels = offsets.shape[0]
    channels = table.shape[1]
    feats = np.zeros((n, n_levels * channels), dtype=table.dtype)
    idx = np.empty((n, n_levels, 8), dtype=np.int64)
    wts = np.empty((n, n_levels, 8), dtype=table.dtype)
    mask = np.int64(table_size - 1)
    for i in range(n):
        for lvl in range(n_levels):
            res = resolutions[lvl]
            side = res + 1
            x0, fx = _cell(points[i, 0], res)
            y0, fy = _cell(points[i, 1], res)
            z0, fz = _cell(points[i, 2], res)
            for k in range(8):
                cx = x0 + (k & 1)
                cy = y0 + ((k >> 1) & 1)
                cz = z0 + ((k >> 2) & 1)
                w = (fx if k & 1 else 1.0 - fx) * (fy if k & 2 else 1.0 - fy) * (fz if k & 4 else 1.0 - fz)
                if hashed[lvl]:
                    li = (cx ^ (cy * PRIME_Y) ^ (cz * PRIME_Z)) & mask
                else:
                    li = cx + cy * side + cz * side * side
                li += offsets[lvl]
                idx[i, lvl, k] = li
                wts[i, lvl, k] = w
            for c in range(channels):
                acc = 0.0
                for k in range(8):
                    acc += wts[i, lvl, k] * table[idx[i, lvl, k], c]
                feats[i, lvl * channels + c] = acc
    return feats, idx, wts


@njit
def grid_scatter(grad_feats, idx, wts, grad_table):
    n, n_levels, _ = idx.shape
    channels = grad_table.shape[1]
    for i in range(n):
        for lvl in range(n_levels):
            for k in range(8):
                e = idx[i, lvl, k]
                w = wts[i, lvl, k]
                for c in range(channels):
                    grad_table[e, c] += w * grad_feats[i, lvl * channels + c]


@njit
def volume_weights(sigma, delta, offsets):
    n_rays = offsets.shape[0] - 1
    w = np.empty_like(sigma)
    trans = np.empty_like(sigma)
    t_final = np.empty(n_rays, dtype=sigma.dtype)
    for r in range(n_rays):
        acc = 0.0
        for i in range(offsets[r], offsets[r + 1]):
            tau = np.float64(sigma[i]) * np.float64(delta[i])
            t = np.exp(-acc)
            trans[i] = t
            w[i] = t * -np.expm1(-tau)
            acc += tau
        t_final[r] = np.exp(-acc)
    return w, trans, t_final


@njit
def volume_weights_backward(grad_w, grad_opacity, sigma, delta, w, trans, offsets):
    n_rays = offsets.shape[0] - 1
    grad_sigma = np.empty_like(sigma)
    for r in range(n_rays):
        go = np.float64(grad_opacity[r])
        suffix = 0.0
        for i in range(offsets[r + 1] - 1, offsets[r] - 1, -1):
            g = np.float64(grad_w[i]) + go
            tau = np.float64(sigma[i]) * np.float64(delta[i])
            t_next = np.float64(trans[i]) * np.exp(-tau)
            grad_sigma[i] = np.float64(delta[i]) * (g * t_next - suffix)
            suffix += g * np.float64(w[i])
    return grad_sigma


@njit
def segment_weighted_sum(w, values, offsets):
    n_rays = offsets.shape[0] - 1
    k = values.shape[1]
    out = np.zeros((n_rays, k), dtype=values.dtype)
    for r in range(n_rays):
        for i in range(offsets[r], offsets[r + 1]):
            wi = w[i]
            for c in range(k):
                out[r, c] += wi * values[i, c]
    return out


@njit
def gelu(x):
    flat = x.ravel()
    y = np.empty_like(flat)
    dy = np.empty_like(flat)
    for i in range(flat.shape[0]):
        v = np.float64(flat[i])
        cdf = 0.5 * (1.0 + math.erf(v * 0.7071067811865476))
        pdf = math.exp(-0.5 * v * v) * 0.3989422804014327
        y[i] = v * cdf
        dy[i] = cdf + v * pdf
    return y.reshape(x.shape), dy.reshape(x.shape)
