"""Vectorized numpy implementations of the hot kernels.

Semantics must match numba_backend exactly (up to floating-point summation
order); tests/test_kernels.py enforces parity.
"""

import numpy as np


def _edge_dets(tri, dirs):
    # tri: (..., 3 corners, 3 xyz); dirs broadcastable (..., 3)
    # det[a, b, p] = (a x b) . p for the three directed edges (v0,v1),(v1,v2),(v2,v0)
    a = tri
    b = tri[..., [1, 2, 0], :]
    cx = a[..., 1] * b[..., 2] - a[..., 2] * b[..., 1]
    cy = a[..., 2] * b[..., 0] - a[..., 0] * b[..., 2]
    cz = a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]
    d = dirs[..., None, :]
    return cx * d[..., 0] + cy * d[..., 1] + cz * d[..., 2]


def locate_root(dirs, verts, faces, eps):
    """First face (lowest index) whose spherical triangle contains each direction.

    Returns -1 where no face contains the direction within eps.
    """
    tri = verts[faces]  # (F,3,3)
    # dets: (N, F, 3)
    dets = _edge_dets(tri[None, :, :, :], dirs[:, None, :])
    ok = (dets >= -eps).all(axis=2)
    hit = ok.any(axis=1)
    first = ok.argmax(axis=1)
    return np.where(hit, first, -1).astype(np.int64)


def descend_level(parent, dirs, verts, faces, eps):
    """Refine a parent-face assignment one subdivision level down.

    Children of parent p are faces 4p..4p+3. Picks the first (lowest index)
    containing child; if rounding leaves no child containing, falls back to
    the child with the largest minimum edge determinant.
    """
    children = parent[:, None] * 4 + np.arange(4, dtype=np.int64)[None, :]
    tri = verts[faces[children]]  # (N,4,3,3)
    dets = _edge_dets(tri, dirs[:, None, :])  # (N,4,3)
    ok = (dets >= -eps).all(axis=2)
    hit = ok.any(axis=1)
    first = ok.argmax(axis=1)
    fallback = dets.min(axis=2).argmax(axis=1)
    child = np.where(hit, first, fallback)
    return np.take_along_axis(children, child[:, None], axis=1)[:, 0]


def bilinear_gather(img, idx, w):
    """img: (HW, C); idx: (F, 4) linear pixel indices; w: (F, 4) weights."""
    return (img[idx] * w[:, :, None]).sum(axis=1)


def scatter_add_rows(src, idx, nrows):
    """Accumulate src rows (M, C) into a (nrows, C) array at idx (duplicates add)."""
    out = np.zeros((nrows, src.shape[1]), dtype=src.dtype)
    np.add.at(out, idx, src)
    return out


def scatter_add_flat(src, idx, n):
    out = np.zeros(n, dtype=src.dtype)
    np.add.at(out, idx, src)
    return out
