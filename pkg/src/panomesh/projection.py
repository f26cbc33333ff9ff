"""Equirectangular <-> spherical-mesh resampling and point-cloud reprojection.

Pixel (u, v) maps to longitude (2u/W - 1)*pi and latitude (v/H - 0.5)*pi.
A face center (x, y, z) maps back via lon = atan2(y, x),
lat = atan2(z, sqrt(x^2 + y^2)). "Depth" throughout is radial distance from
the camera center, so a point reprojects as
(cos lat cos lon, cos lat sin lon, sin lat) * d.

E2S samples the image bilinearly at each face center, wrapping in longitude
and clamping in latitude; S2E assigns each pixel the value of its containing
face. Pixel centers sit at (col + 0.5, row + 0.5).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ShapeError
from .icosphere import MeshHierarchy, face_count
from .kernels import bilinear_gather
from .icosphere import locate_faces


@dataclass(frozen=True)
class EquirectGrid:
    width: int
    height: int

    def __post_init__(self):
        if self.width != 2 * self.height:
            raise ShapeError(
                f"equirectangular grid needs W == 2H, got {self.width}x{self.height}"
            )
        if self.height < 2:
            raise ShapeError("grid must be at least 2 pixels tall")


def pixel_to_lonlat(grid: EquirectGrid, u, v):
    """Fractional pixel coordinates to (longitude, latitude) in radians."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if np.any(u < 0) or np.any(u >= grid.width) or np.any(v < 0) or np.any(v >= grid.height):
        raise DomainError("pixel coordinates outside [0, W) x [0, H)")
    lon = (2.0 * u / grid.width - 1.0) * np.pi
    lat = (v / grid.height - 0.5) * np.pi
    return lon, lat


def lonlat_to_pixel(grid: EquirectGrid, lon, lat):
    """Exact inverse of pixel_to_lonlat on its range."""
    lon = np.asarray(lon, dtype=np.float64)
    lat = np.asarray(lat, dtype=np.float64)
    u = (1.0 + lon / np.pi) * grid.width / 2.0
    v = (0.5 + lat / np.pi) * grid.height
    return u, v


def center_to_lonlat(c):
    """Unit 3-vector(s) to (longitude, latitude); the +z pole maps to lon 0."""
    c = np.asarray(c, dtype=np.float64)
    norms = np.linalg.norm(c, axis=-1)
    if not np.all(np.abs(norms - 1.0) <= 1e-9):
        raise DomainError("input must be unit vectors (within 1e-9)")
    x, y, z = c[..., 0], c[..., 1], c[..., 2]
    lon = np.arctan2(y, x)
    lat = np.arctan2(z, np.hypot(x, y))
    return lon, lat


def lonlat_to_direction(lon, lat):
    lon = np.asarray(lon, dtype=np.float64)
    lat = np.asarray(lat, dtype=np.float64)
    cl = np.cos(lat)
    return np.stack([cl * np.cos(lon), cl * np.sin(lon), np.sin(lat)], axis=-1)


@dataclass(frozen=True)
class ProjectionTable:
    """Precomputed resampling maps for one (grid, mr) pairing.

    e2s_index/e2s_weight: per face, 4 linear pixel indices (row * W + col)
    and bilinear weights summing to 1. s2e_face: per pixel, containing face.
    """

    grid: EquirectGrid
    mr: int
    e2s_index: np.ndarray  # (F, 4) int64
    e2s_weight: np.ndarray  # (F, 4) float64
    s2e_face: np.ndarray  # (H, W) int64


def _bilinear_coords(grid: EquirectGrid, u, v):
    # Sample at continuous (u, v); pixel centers at integer + 0.5. Columns wrap
    # (longitude is periodic), rows clamp (pole rows saturate).
    w, h = grid.width, grid.height
    x = u - 0.5
    y = v - 0.5
    c0 = np.floor(x)
    r0 = np.floor(y)
    fx = x - c0
    fy = y - r0
    c0 = c0.astype(np.int64)
    r0 = r0.astype(np.int64)
    c1 = np.mod(c0 + 1, w)
    c0 = np.mod(c0, w)
    r1 = np.clip(r0 + 1, 0, h - 1)
    r0 = np.clip(r0, 0, h - 1)
    idx = np.stack([r0 * w + c0, r0 * w + c1, r1 * w + c0, r1 * w + c1], axis=1)
    wgt = np.stack(
        [(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy], axis=1
    )
    return idx, wgt


def build_projection_table(
    grid: EquirectGrid, hierarchy: MeshHierarchy, mr: int, chunk: int = 65536
) -> ProjectionTable:
    """Precompute E2S sample coordinates and the S2E face lookup."""
    geo = hierarchy.geometry(mr)
    lon, lat = center_to_lonlat(geo.centers)
    u, v = lonlat_to_pixel(grid, lon, lat)
    e2s_index, e2s_weight = _bilinear_coords(grid, u, v)

    h, w = grid.height, grid.width
    cols, rows = np.meshgrid(np.arange(w), np.arange(h))
    plon, plat = pixel_to_lonlat(grid, cols.reshape(-1) + 0.5, rows.reshape(-1) + 0.5)
    dirs = lonlat_to_direction(plon, plat)
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    s2e = np.empty(h * w, dtype=np.int64)
    for start in range(0, h * w, chunk):
        stop = min(start + chunk, h * w)
        s2e[start:stop] = locate_faces(hierarchy, mr, dirs[start:stop])
    return ProjectionTable(
        grid=grid,
        mr=mr,
        e2s_index=e2s_index,
        e2s_weight=e2s_weight,
        s2e_face=s2e.reshape(h, w),
    )


def e2s_resample(table: ProjectionTable, image: np.ndarray) -> np.ndarray:
    """(H, W, C) image -> (F, C) per-face values by bilinear sampling."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        image = image[:, :, None]
    h, w = table.grid.height, table.grid.width
    if image.shape[:2] != (h, w):
        raise ShapeError(
            f"image is {image.shape[0]}x{image.shape[1]}, table expects {h}x{w}"
        )
    flat = np.ascontiguousarray(image.reshape(h * w, image.shape[2]))
    return bilinear_gather(flat, table.e2s_index, table.e2s_weight)


def s2e_resample(table: ProjectionTable, face_values: np.ndarray) -> np.ndarray:
    """(F, C) per-face values -> (H, W, C) piecewise-constant image."""
    face_values = np.asarray(face_values, dtype=np.float64)
    if face_values.ndim == 1:
        face_values = face_values[:, None]
    expected = face_count(table.mr)
    if face_values.shape[0] != expected:
        raise ShapeError(
            f"got {face_values.shape[0]} face values, mr={table.mr} needs {expected}"
        )
    return face_values[table.s2e_face]


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray  # (N, 3) float64, meters
    colors: np.ndarray | None = None  # (N, 3) uint8


def _to_points(lon, lat, dist, colors):
    dist = np.asarray(dist, dtype=np.float64).reshape(-1)
    if np.any(dist < 0):
        raise DomainError("distances must be non-negative (0 marks invalid)")
    valid = dist > 0
    dirs = lonlat_to_direction(np.asarray(lon).reshape(-1), np.asarray(lat).reshape(-1))
    points = dirs[valid] * dist[valid, None]
    kept = None
    if colors is not None:
        kept = np.asarray(colors).reshape(-1, 3)[valid].astype(np.uint8)
    return PointCloud(points=points, colors=kept)


def depth_to_pointcloud_grid(grid: EquirectGrid, depth, rgb=None) -> PointCloud:
    """Equirectangular distance map -> 3D points; zero-distance pixels dropped."""
    depth = np.asarray(depth, dtype=np.float64)
    if depth.shape[:2] != (grid.height, grid.width):
        raise ShapeError(
            f"depth is {depth.shape}, grid expects {grid.height}x{grid.width}"
        )
    cols, rows = np.meshgrid(np.arange(grid.width), np.arange(grid.height))
    lon, lat = pixel_to_lonlat(grid, cols + 0.5, rows + 0.5)
    return _to_points(lon, lat, depth, rgb)


def depth_to_pointcloud_mesh(hierarchy: MeshHierarchy, mr: int, depth, rgb=None) -> PointCloud:
    """Per-face distances -> 3D points at the face centers."""
    depth = np.asarray(depth, dtype=np.float64).reshape(-1)
    if depth.shape[0] != face_count(mr):
        raise ShapeError(f"got {depth.shape[0]} distances, mr={mr} needs {face_count(mr)}")
    lon, lat = center_to_lonlat(hierarchy.geometry(mr).centers)
    return _to_points(lon, lat, depth, rgb)
