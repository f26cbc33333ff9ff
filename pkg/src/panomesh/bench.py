"""Timing harnesses behind the `bench` CLI subcommands."""

from __future__ import annotations

import time

import numpy as np

from .icosphere import AdjacencyCache, MeshHierarchy, compute_faf, locate_faces
from .kernels import available_backends, get_backend


def bench_faf(mr: int, repeats: int = 3) -> dict:
    """Same adjacency table through the cache vs recomputed from scratch."""
    hierarchy = MeshHierarchy()
    faces = hierarchy.geometry(mr).faces

    t0 = time.perf_counter()
    for _ in range(repeats):
        compute_faf(faces)
    uncached = (time.perf_counter() - t0) / repeats

    cache = AdjacencyCache()
    cache.faf(hierarchy, mr)  # pay the one real computation up front
    t0 = time.perf_counter()
    for _ in range(repeats):
        cache.faf(hierarchy, mr)
    cached = (time.perf_counter() - t0) / repeats
    return {"mr": mr, "uncached_s": uncached, "cached_s": cached, "repeats": repeats}


def bench_kernels(mr: int = 6, n_points: int = 100_000, repeats: int = 3) -> list[dict]:
    """Face location and bilinear gather, once per available backend."""
    hierarchy = MeshHierarchy()
    hierarchy.geometry(mr)
    rng = np.random.default_rng(0)
    dirs = rng.normal(size=(n_points, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    image = rng.random((n_points, 8))
    idx = rng.integers(0, n_points, size=(n_points, 4))
    wgt = rng.random((n_points, 4))
    wgt /= wgt.sum(axis=1, keepdims=True)

    rows = []
    for name in available_backends():
        backend = get_backend(name)
        # Warm once so numba's compile time stays out of the measurement.
        locate_faces(hierarchy, mr, dirs[:16], backend=backend)
        backend.bilinear_gather(image, idx[:16], wgt[:16])

        t0 = time.perf_counter()
        for _ in range(repeats):
            locate_faces(hierarchy, mr, dirs, backend=backend)
        locate_s = (time.perf_counter() - t0) / repeats

        t0 = time.perf_counter()
        for _ in range(repeats):
            backend.bilinear_gather(image, idx, wgt)
        gather_s = (time.perf_counter() - t0) / repeats
        rows.append(
            {"backend": name, "mr": mr, "n": n_points, "locate_s": locate_s, "gather_s": gather_s}
        )
    return rows
