"""Procedural panoramas with exact ground-truth distance.

A scene is an axis-aligned box room seen from its interior, with a few
floating spheres. Every pixel's distance comes from analytic ray casting,
so the depth map is exact and every value stays inside (0.1, 10) meters.
The same seed always produces the same scene.
"""

from __future__ import annotations

import numpy as np

from .projection import EquirectGrid, lonlat_to_direction, pixel_to_lonlat


def _pixel_directions(grid: EquirectGrid) -> np.ndarray:
    cols, rows = np.meshgrid(np.arange(grid.width), np.arange(grid.height))
    lon, lat = pixel_to_lonlat(grid, cols + 0.5, rows + 0.5)
    return lonlat_to_direction(lon, lat)


def make_scene(grid: EquirectGrid, seed: int = 0):
    """Returns (rgb float64 (H, W, 3) in [0, 1], distance float64 (H, W))."""
    rng = np.random.default_rng(seed)
    # Wall offsets from the camera along -x +x -y +y -z +z.
    offsets = rng.uniform(1.5, 4.5, size=6)
    wall_colors = rng.uniform(0.2, 0.95, size=(6, 3))
    stripe_freq = rng.uniform(1.0, 3.0, size=6)

    n_spheres = int(rng.integers(1, 4))
    sph_dir = rng.normal(size=(n_spheres, 3))
    sph_dir /= np.linalg.norm(sph_dir, axis=1, keepdims=True)
    sph_rad = rng.uniform(0.3, 0.7, size=n_spheres)
    sph_center = sph_dir * (rng.uniform(1.2, 2.8, size=n_spheres) + sph_rad)[:, None]
    sph_color = rng.uniform(0.2, 0.95, size=(n_spheres, 3))

    d = _pixel_directions(grid)
    h, w = grid.height, grid.width

    # Exit distance through each axis slab; the nearest one is the wall hit.
    slab_t = np.full((h, w, 3), np.inf)
    wall_side = np.zeros((h, w, 3), dtype=np.int64)
    for axis in range(3):
        comp = d[..., axis]
        pos = comp > 0
        neg = comp < 0
        t = np.full((h, w), np.inf)
        t[pos] = offsets[2 * axis + 1] / comp[pos]
        t[neg] = -offsets[2 * axis] / comp[neg]
        slab_t[..., axis] = t
        wall_side[..., axis] = 2 * axis + pos.astype(np.int64)
    hit_axis = np.argmin(slab_t, axis=2)
    dist = np.take_along_axis(slab_t, hit_axis[..., None], axis=2)[..., 0]
    wall = np.take_along_axis(wall_side, hit_axis[..., None], axis=2)[..., 0]

    point = d * dist[..., None]
    rgb = wall_colors[wall]
    # Stripe the walls along the two in-plane axes so the image branch has
    # something to latch onto.
    for axis in range(3):
        u_axis, v_axis = [a for a in range(3) if a != axis]
        sel = hit_axis == axis
        phase = np.sin(stripe_freq[wall[sel]] * point[sel, u_axis]) * np.sin(
            stripe_freq[wall[sel]] * point[sel, v_axis] + 1.0
        )
        rgb[sel] *= 0.75 + 0.25 * phase[:, None]

    for i in range(n_spheres):
        c, r = sph_center[i], sph_rad[i]
        b = d @ c
        disc = b * b - (c @ c - r * r)
        ok = disc > 0
        t = b - np.sqrt(np.where(ok, disc, 0.0))
        hit = ok & (t > 0) & (t < dist)
        normal = (d[hit] * t[hit, None] - c) / r
        shade = 0.55 + 0.45 * np.clip(-(normal * d[hit]).sum(axis=1), 0.0, 1.0)
        dist[hit] = t[hit]
        rgb[hit] = sph_color[i] * shade[:, None]

    return np.clip(rgb, 0.0, 1.0), dist


def band_limited_card(height: int, width: int) -> np.ndarray:
    """Smooth low-order test pattern on the sphere, rendered to a grid.

    Built from degree <= 2 polynomial terms of the view direction, so its
    angular content is gentle enough that finer meshes reconstruct it
    strictly better."""
    d = _pixel_directions(EquirectGrid(width, height))
    x, y, z = d[..., 0], d[..., 1], d[..., 2]
    return (
        3.0
        + 0.7 * x
        + 0.5 * y
        + 0.6 * z
        + 0.8 * x * y
        + 0.6 * y * z
        + 0.4 * (x * x - y * y)
        + 0.5 * (3.0 * z * z - 1.0)
    )
