"""Icosahedral spherical meshes: subdivision, face adjacency, point location.

A mesh at resolution level ``mr`` has 20 * 4**mr triangular faces and
10 * 4**mr + 2 vertices, all on the unit sphere. Each face carries its value
at the normalized centroid. The FAF table lists, per face, the three faces
sharing an edge with it; neighbor slot k corresponds to edge (v_k, v_{k+1}).

Subdivision child convention: face i at level L owns faces 4i..4i+3 at L+1.
Children 0..2 keep parent corners v0..v2; child 3 is the midpoint triangle.
Pooling and unpooling are therefore pure index arithmetic.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, GeometryError, LevelError, TopologyError
from .kernels import descend_level, locate_root

CONTAINMENT_EPS = 1e-12

# (±1, ±phi, 0) permutation table, normalized; faces are counter-clockwise
# viewed from outside (det[a,b,c] > 0).
_PHI = (1.0 + np.sqrt(5.0)) / 2.0
_ICO_VERTS = np.array(
    [
        [-1, _PHI, 0], [1, _PHI, 0], [-1, -_PHI, 0], [1, -_PHI, 0],
        [0, -1, _PHI], [0, 1, _PHI], [0, -1, -_PHI], [0, 1, -_PHI],
        [_PHI, 0, -1], [_PHI, 0, 1], [-_PHI, 0, -1], [-_PHI, 0, 1],
    ],
    dtype=np.float64,
)
_ICO_FACES = np.array(
    [
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ],
    dtype=np.int64,
)

_faf_lock = threading.Lock()
_faf_computations = 0


def faf_computation_count() -> int:
    """Total number of compute_faf invocations in this process."""
    return _faf_computations


def reset_faf_computation_count() -> None:
    global _faf_computations
    with _faf_lock:
        _faf_computations = 0


def face_count(mr: int) -> int:
    return 20 * 4**mr


def vertex_count(mr: int) -> int:
    return 10 * 4**mr + 2


def _normalized(v):
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def _face_centers(vertices, faces):
    return _normalized(vertices[faces].mean(axis=1))


@dataclass(frozen=True)
class SphericalMesh:
    """One subdivision level: unit-sphere vertices, CCW faces, centers, FAF."""

    mr: int
    vertices: np.ndarray  # (V, 3) float64, unit norm
    faces: np.ndarray  # (F, 3) int64
    centers: np.ndarray  # (F, 3) float64, unit norm
    faf: np.ndarray  # (F, 3) int64

    @property
    def n_faces(self) -> int:
        return self.faces.shape[0]

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]


def compute_faf(faces: np.ndarray) -> np.ndarray:
    """Face-adjacent-face table of a closed, consistently oriented triangle mesh.

    Slot k of face (v0, v1, v2) holds the face sharing edge (v_k, v_{k+1}).
    Raises TopologyError when some edge does not have exactly two incident
    faces with opposite orientation.
    """
    global _faf_computations
    with _faf_lock:
        _faf_computations += 1

    faces = np.asarray(faces, dtype=np.int64)
    nf = faces.shape[0]
    nv = int(faces.max()) + 1 if nf else 0
    src = faces.reshape(-1)  # edge e = 3f + k starts at faces[f, k]
    dst = faces[:, [1, 2, 0]].reshape(-1)
    key = src * nv + dst
    rev = dst * nv + src

    order = np.argsort(key, kind="stable")
    sorted_key = key[order]
    dup = np.nonzero(sorted_key[1:] == sorted_key[:-1])[0]
    if dup.size:
        e = order[dup[0]]
        raise TopologyError(
            f"edge ({src[e]}, {dst[e]}) appears twice with the same orientation"
        )
    pos = np.searchsorted(sorted_key, rev)
    pos_clipped = np.minimum(pos, sorted_key.size - 1)
    matched = sorted_key[pos_clipped] == rev
    if not matched.all():
        e = int(np.nonzero(~matched)[0][0])
        raise TopologyError(
            f"edge ({src[e]}, {dst[e]}) has no partner face (boundary or non-manifold)"
        )
    partner_edge = order[pos_clipped]
    return (partner_edge // 3).reshape(nf, 3)


def build_icosahedron() -> SphericalMesh:
    """The 20-face base mesh (mr = 0) on the fixed golden-ratio vertex table."""
    vertices = _normalized(_ICO_VERTS.copy())
    faces = _ICO_FACES.copy()
    return SphericalMesh(
        mr=0,
        vertices=vertices,
        faces=faces,
        centers=_face_centers(vertices, faces),
        faf=compute_faf(faces),
    )


def _subdivide_geometry(vertices, faces):
    """One loop-subdivision round; midpoints re-normalized onto the sphere."""
    nv = vertices.shape[0]
    ea = faces.reshape(-1)
    eb = faces[:, [1, 2, 0]].reshape(-1)
    lo = np.minimum(ea, eb)
    hi = np.maximum(ea, eb)
    ekey = lo * nv + hi
    uniq, inverse = np.unique(ekey, return_inverse=True)
    mid_index = (nv + inverse).reshape(-1, 3)  # midpoint of edge (v_k, v_{k+1})

    mids = _normalized(vertices[uniq // nv] + vertices[uniq % nv])
    new_vertices = np.concatenate([vertices, mids], axis=0)

    v0, v1, v2 = faces[:, 0], faces[:, 1], faces[:, 2]
    m01, m12, m20 = mid_index[:, 0], mid_index[:, 1], mid_index[:, 2]
    children = np.stack(
        [
            np.stack([v0, m01, m20], axis=1),
            np.stack([v1, m12, m01], axis=1),
            np.stack([v2, m20, m12], axis=1),
            np.stack([m01, m12, m20], axis=1),
        ],
        axis=1,
    )  # (F, 4, 3) -> children of face i are rows 4i..4i+3
    return new_vertices, children.reshape(-1, 3)


def subdivide(mesh: SphericalMesh) -> SphericalMesh:
    """Quadruple the face count, keeping the child-index convention."""
    vertices, faces = _subdivide_geometry(mesh.vertices, mesh.faces)
    return SphericalMesh(
        mr=mesh.mr + 1,
        vertices=vertices,
        faces=faces,
        centers=_face_centers(vertices, faces),
        faf=compute_faf(faces),
    )


@dataclass(frozen=True)
class _LevelGeometry:
    mr: int
    vertices: np.ndarray
    faces: np.ndarray
    centers: np.ndarray


class MeshHierarchy:
    """All subdivision levels a network touches, built lazily from mr = 0.

    Geometry (vertices/faces/centers) is memoized per level; FAF tables are
    deliberately left to AdjacencyCache so adjacency is computed once per
    distinct mr, not once per level built in passing.
    """

    def __init__(self):
        vertices = _normalized(_ICO_VERTS.copy())
        faces = _ICO_FACES.copy()
        self._levels = [
            _LevelGeometry(0, vertices, faces, _face_centers(vertices, faces))
        ]
        self._lock = threading.Lock()

    def geometry(self, mr: int) -> _LevelGeometry:
        if mr < 0:
            raise LevelError(f"mesh resolution must be >= 0, got {mr}")
        with self._lock:
            while len(self._levels) <= mr:
                top = self._levels[-1]
                vertices, faces = _subdivide_geometry(top.vertices, top.faces)
                self._levels.append(
                    _LevelGeometry(
                        top.mr + 1, vertices, faces, _face_centers(vertices, faces)
                    )
                )
            return self._levels[mr]

    def max_level(self) -> int:
        return len(self._levels) - 1


class AdjacencyCache:
    """Per-mr FAF tables, each computed exactly once; concurrent-safe."""

    def __init__(self):
        self.entries: dict[int, np.ndarray] = {}
        self.hits = 0
        self.misses = 0
        self._lock = threading.Lock()

    def faf(self, hierarchy: MeshHierarchy, mr: int) -> np.ndarray:
        geo = hierarchy.geometry(mr)
        with self._lock:
            table = self.entries.get(mr)
            if table is not None:
                self.hits += 1
                return table
            self.misses += 1
            table = compute_faf(geo.faces)
            self.entries[mr] = table
            return table

    def get_mesh(self, hierarchy: MeshHierarchy, mr: int) -> SphericalMesh:
        faf = self.faf(hierarchy, mr)
        geo = hierarchy.geometry(mr)
        return SphericalMesh(
            mr=mr, vertices=geo.vertices, faces=geo.faces, centers=geo.centers, faf=faf
        )

    def stats(self) -> dict:
        return {"hits": self.hits, "misses": self.misses, "levels": sorted(self.entries)}


def get_mesh(cache: AdjacencyCache, hierarchy: MeshHierarchy, mr: int) -> SphericalMesh:
    """Mesh at level mr with its FAF pulled through the cache."""
    return cache.get_mesh(hierarchy, mr)


def locate_faces(
    hierarchy: MeshHierarchy, mr: int, directions: np.ndarray, backend=None
) -> np.ndarray:
    """Containing face at level mr for each unit direction (descent from roots).

    Edge ties resolve to the lowest face index. O(mr) containment tests per
    direction. `backend` overrides the process-wide kernel choice (benchmarks
    and parity tests).
    """
    _locate_root = locate_root if backend is None else backend.locate_root
    _descend = descend_level if backend is None else backend.descend_level
    directions = np.ascontiguousarray(directions, dtype=np.float64)
    if directions.ndim != 2 or directions.shape[1] != 3:
        raise DomainError("directions must be an (N, 3) array")
    norms = np.linalg.norm(directions, axis=1)
    if not np.all(np.abs(norms - 1.0) <= 1e-9):
        raise DomainError("directions must be unit vectors (within 1e-9)")

    root = hierarchy.geometry(0)
    idx = _locate_root(directions, root.vertices, root.faces, CONTAINMENT_EPS)
    if np.any(idx < 0):
        bad = directions[int(np.nonzero(idx < 0)[0][0])]
        raise GeometryError(f"no root face contains direction {bad}; mesh is broken")
    for level in range(1, mr + 1):
        geo = hierarchy.geometry(level)
        idx = _descend(idx, directions, geo.vertices, geo.faces, CONTAINMENT_EPS)
    return idx


def locate_face(hierarchy: MeshHierarchy, mr: int, direction) -> int:
    """Single-direction convenience wrapper around locate_faces."""
    direction = np.asarray(direction, dtype=np.float64).reshape(1, 3)
    return int(locate_faces(hierarchy, mr, direction)[0])


def timed_faf(faces: np.ndarray):
    """compute_faf plus wall time, for CLI reporting."""
    t0 = time.perf_counter()
    table = compute_faf(faces)
    return table, time.perf_counter() - t0
