"""Numba-compiled loop implementations of the hot kernels.

Single-threaded on purpose: training determinism requires a fixed reduction
order. cache=True so CLI invocations skip recompilation.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _tri_min_det(verts, faces, f, p):
    v0 = verts[faces[f, 0]]
    v1 = verts[faces[f, 1]]
    v2 = verts[faces[f, 2]]
    m = 1.0e300
    # edge (v0,v1)
    d = (
        (v0[1] * v1[2] - v0[2] * v1[1]) * p[0]
        + (v0[2] * v1[0] - v0[0] * v1[2]) * p[1]
        + (v0[0] * v1[1] - v0[1] * v1[0]) * p[2]
    )
    if d < m:
        m = d
    # edge (v1,v2)
    d = (
        (v1[1] * v2[2] - v1[2] * v2[1]) * p[0]
        + (v1[2] * v2[0] - v1[0] * v2[2]) * p[1]
        + (v1[0] * v2[1] - v1[1] * v2[0]) * p[2]
    )
    if d < m:
        m = d
    # edge (v2,v0)
    d = (
        (v2[1] * v0[2] - v2[2] * v0[1]) * p[0]
        + (v2[2] * v0[0] - v2[0] * v0[2]) * p[1]
        + (v2[0] * v0[1] - v2[1] * v0[0]) * p[2]
    )
    if d < m:
        m = d
    return m


@njit(cache=True)
def locate_root(dirs, verts, faces, eps):
    n = dirs.shape[0]
    nf = faces.shape[0]
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        p = dirs[i]
        found = -1
        for f in range(nf):
            if _tri_min_det(verts, faces, f, p) >= -eps:
                found = f
                break
        out[i] = found
    return out


@njit(cache=True)
def descend_level(parent, dirs, verts, faces, eps):
    n = parent.shape[0]
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        p = dirs[i]
        base = parent[i] * 4
        best = -1
        best_det = -1.0e300
        chosen = -1
        for k in range(4):
            m = _tri_min_det(verts, faces, base + k, p)
            if m >= -eps:
                chosen = base + k
                break
            if m > best_det:
                best_det = m
                best = base + k
        out[i] = chosen if chosen >= 0 else best
    return out


@njit(cache=True)
def bilinear_gather(img, idx, w):
    nf = idx.shape[0]
    nc = img.shape[1]
    out = np.empty((nf, nc), dtype=np.float64)
    for f in range(nf):
        for c in range(nc):
            acc = 0.0
            for k in range(4):
                acc += img[idx[f, k], c] * w[f, k]
            out[f, c] = acc
    return out


@njit(cache=True)
def scatter_add_rows(src, idx, nrows):
    nc = src.shape[1]
    out = np.zeros((nrows, nc), dtype=src.dtype)
    for m in range(idx.shape[0]):
        r = idx[m]
        for c in range(nc):
            out[r, c] += src[m, c]
    return out


@njit(cache=True)
def scatter_add_flat(src, idx, n):
    out = np.zeros(n, dtype=src.dtype)
    for m in range(idx.shape[0]):
        out[idx[m]] += src[m]
    return out
