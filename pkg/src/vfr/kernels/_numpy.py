"""Vectorised numpy implementations of the hot kernels.

Every function here has a twin in ``_numba`` with the same signature and
semantics; the two are cross-checked in the test-suite.
"""

import numpy as np
from scipy.special import erf

PRIME_Y = np.uint64(2654435761)
PRIME_Z = np.uint64(805459861)

# corner k uses bit 0 for x, bit 1 for y, bit 2 for z
_CORNERS = np.array([[(k >> a) & 1 for a in range(3)] for k in range(8)], dtype=np.int64)


def _corner_index(cx, cy, cz, res, hashed, table_size):
    if hashed:
        h = cx.astype(np.uint64) ^ (cy.astype(np.uint64) * PRIME_Y) ^ (cz.astype(np.uint64) * PRIME_Z)
        return (h & np.uint64(table_size - 1)).astype(np.int64)
    side = res + 1
    return cx + cy * side + cz * side * side


def grid_encode(points, table, offsets, resolutions, hashed, table_size):
    n = points.shape[0]
    n_levels = offsets.shape[0]
    channels = table.shape[1]
    dtype = table.dtype
    feats = np.empty((n, n_levels * channels), dtype=dtype)
    idx = np.empty((n, n_levels, 8), dtype=np.int64)
    wts = np.empty((n, n_levels, 8), dtype=dtype)
    p = points.astype(np.float64)
    for lvl in range(n_levels):
        res = int(resolutions[lvl])
        pos = p * res
        cell = np.clip(np.floor(pos), 0, res - 1)
        frac = pos - cell
        cell = cell.astype(np.int64)
        c = cell[:, None, :] + _CORNERS[None, :, :]
        w3 = np.where(_CORNERS[None, :, :] == 1, frac[:, None, :], 1.0 - frac[:, None, :])
        w = w3[..., 0] * w3[..., 1] * w3[..., 2]
        li = _corner_index(c[..., 0], c[..., 1], c[..., 2], res, bool(hashed[lvl]), table_size)
        li += offsets[lvl]
        idx[:, lvl] = li
        wts[:, lvl] = w
        vals = table[li]  # (n, 8, C)
        feats[:, lvl * channels:(lvl + 1) * channels] = np.einsum("nk,nkc->nc", w.astype(dtype), vals)
    return feats, idx, wts


def grid_scatter(grad_feats, idx, wts, grad_table):
    n_entries, channels = grad_table.shape
    flat_idx = idx.reshape(-1)
    for c in range(channels):
        g = grad_feats[:, c::channels]  # (n, L) for this channel across levels
        contrib = (wts.astype(np.float64) * g[:, :, None]).reshape(-1)
        grad_table[:, c] += np.bincount(flat_idx, weights=contrib, minlength=n_entries).astype(grad_table.dtype)


def _segment_ids(offsets):
    counts = np.diff(offsets)
    return np.repeat(np.arange(counts.shape[0]), counts), counts


def _segment_exclusive_cumsum(x, offsets, ray_of):
    cs = np.cumsum(x)
    start = np.concatenate(([0.0], cs))[offsets[:-1]]
    return cs - x - start[ray_of], cs


def volume_weights(sigma, delta, offsets):
    ray_of, counts = _segment_ids(offsets)
    tau = sigma.astype(np.float64) * delta.astype(np.float64)
    excl, cs = _segment_exclusive_cumsum(tau, offsets, ray_of)
    trans = np.exp(-excl)
    w = trans * -np.expm1(-tau)
    padded = np.concatenate(([0.0], cs))
    totals = padded[offsets[1:]] - padded[offsets[:-1]]
    t_final = np.exp(-totals)
    dtype = sigma.dtype
    return w.astype(dtype), trans.astype(dtype), t_final.astype(dtype)


def volume_weights_backward(grad_w, grad_opacity, sigma, delta, w, trans, offsets):
    ray_of, _ = _segment_ids(offsets)
    g = grad_w.astype(np.float64) + grad_opacity.astype(np.float64)[ray_of]
    gw = g * w.astype(np.float64)
    incl = np.cumsum(gw)
    padded = np.concatenate(([0.0], incl))
    seg_end = padded[offsets[1:]][ray_of]
    suffix = seg_end - incl  # sum over later samples of the same ray
    tau = sigma.astype(np.float64) * delta.astype(np.float64)
    t_next = trans.astype(np.float64) * np.exp(-tau)
    grad_sigma = delta.astype(np.float64) * (g * t_next - suffix)
    return grad_sigma.astype(sigma.dtype)


def segment_weighted_sum(w, values, offsets):
    n_rays = offsets.shape[0] - 1
    out = np.zeros((n_rays, values.shape[1]), dtype=values.dtype)
    if values.shape[0] == 0:
        return out
    counts = np.diff(offsets)
    nonempty = counts > 0
    prod = w[:, None].astype(values.dtype) * values
    out[nonempty] = np.add.reduceat(prod, offsets[:-1][nonempty], axis=0)
    return out


def gelu(x):
    """Exact GELU and its derivative, ``(x * Phi(x), Phi(x) + x * phi(x))``."""
    cdf = 0.5 * (1.0 + erf(x * 0.7071067811865476))
    pdf = np.exp(-0.5 * x * x) * 0.3989422804014327
    return (x * cdf).astype(x.dtype), (cdf + x * pdf).astype(x.dtype)
