import numpy as np
import pytest

from panomesh import (
    AdjacencyCache,
    DomainError,
    MeshHierarchy,
    TopologyError,
    build_icosahedron,
    compute_faf,
    face_count,
    faf_computation_count,
    locate_face,
    locate_faces,
    subdivide,
    vertex_count,
)
from reference_impls import faf_bruteforce, locate_scan


def test_base_icosahedron_counts():
    mesh = build_icosahedron()
    assert mesh.n_faces == 20
    assert mesh.n_vertices == 12
    assert np.allclose(np.linalg.norm(mesh.vertices, axis=1), 1.0)


def test_counts_formulas():
    for mr in range(6):
        assert face_count(mr) == 20 * 4**mr
        assert vertex_count(mr) == 10 * 4**mr + 2


def test_subdivide_matches_formulas(hierarchy):
    for mr in range(6):
        geo = hierarchy.geometry(mr)
        assert geo.faces.shape == (face_count(mr), 3)
        assert geo.vertices.shape == (vertex_count(mr), 3)
        assert np.allclose(np.linalg.norm(geo.vertices, axis=1), 1.0)


def test_euler_characteristic(hierarchy):
    for mr in range(5):
        geo = hierarchy.geometry(mr)
        f = geo.faces.shape[0]
        v = geo.vertices.shape[0]
        edges = np.sort(geo.faces[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)
        e = np.unique(edges, axis=0).shape[0]
        assert v - e + f == 2
        assert e == 3 * f // 2


def test_faces_oriented_outward(hierarchy):
    for mr in range(5):
        geo = hierarchy.geometry(mr)
        tri = geo.vertices[geo.faces]
        dets = np.einsum("fi,fi->f", np.cross(tri[:, 0], tri[:, 1]), tri[:, 2])
        assert np.all(dets > 0)


def test_child_block_layout(hierarchy):
    # Children of face i sit at rows 4i..4i+3; the first three keep the
    # parent corners as their leading vertex, the fourth is the triangle of
    # renormalized edge midpoints.
    parent = hierarchy.geometry(2)
    child = hierarchy.geometry(3)
    for i in (0, 7, 100, 319):
        pverts = parent.vertices[parent.faces[i]]
        mids = pverts + np.roll(pverts, -1, axis=0)
        mids /= np.linalg.norm(mids, axis=1, keepdims=True)
        for corner in range(3):
            cverts = child.vertices[child.faces[4 * i + corner]]
            assert np.allclose(cverts[0], pverts[corner], atol=1e-14)
        assert np.allclose(child.vertices[child.faces[4 * i + 3]], mids, atol=1e-14)


def test_faf_symmetry_and_shared_edges(hierarchy, cache):
    for mr in range(4):
        mesh = cache.get_mesh(hierarchy, mr)
        for f in range(0, mesh.n_faces, max(1, mesh.n_faces // 50)):
            for k in range(3):
                g = mesh.faf[f, k]
                assert f in mesh.faf[g], (mr, f, k)
                shared = set(mesh.faces[f]) & set(mesh.faces[g])
                assert shared == {mesh.faces[f, k], mesh.faces[f, (k + 1) % 3]}


def test_faf_matches_bruteforce(hierarchy):
    for mr in range(4):
        geo = hierarchy.geometry(mr)
        assert np.array_equal(compute_faf(geo.faces), faf_bruteforce(geo.faces))


def test_faf_shared_vertex_counts_sparse(hierarchy):
    # Structural cross-check: adjacent faces share exactly 2 vertices.
    from scipy import sparse

    geo = hierarchy.geometry(3)
    faf = compute_faf(geo.faces)
    f = geo.faces.shape[0]
    rows = np.repeat(np.arange(f), 3)
    inc = sparse.csr_matrix(
        (np.ones(3 * f), (rows, geo.faces.ravel())), shape=(f, geo.vertices.shape[0])
    )
    shared = (inc @ inc.T).toarray()
    for face in range(0, f, 37):
        for k in range(3):
            assert shared[face, faf[face, k]] == 2


def test_non_manifold_rejected():
    faces = np.array([[0, 1, 2]])
    with pytest.raises(TopologyError):
        compute_faf(faces)


def test_duplicate_orientation_rejected():
    # Two faces traverse the same directed edge 0->1.
    faces = np.array([[0, 1, 2], [0, 1, 3]])
    with pytest.raises(TopologyError):
        compute_faf(faces)


def test_subdivide_standalone():
    child = subdivide(build_icosahedron())
    assert child.mr == 1
    assert child.n_faces == 80
    assert child.faf.shape == (80, 3)


def test_cache_counts_once(hierarchy):
    cache = AdjacencyCache()
    before = faf_computation_count()
    for mr in (2, 3, 2, 3, 2):
        cache.faf(hierarchy, mr)
    assert faf_computation_count() - before == 2
    assert cache.stats()["hits"] == 3
    assert cache.stats()["misses"] == 2


def test_cache_returns_identical_object(hierarchy):
    cache = AdjacencyCache()
    a = cache.faf(hierarchy, 3)
    b = cache.faf(hierarchy, 3)
    assert a is b
    assert np.array_equal(a, compute_faf(hierarchy.geometry(3).faces))


def test_locate_face_centroids(hierarchy):
    geo = hierarchy.geometry(3)
    idx = locate_faces(hierarchy, 3, geo.centers)
    assert np.array_equal(idx, np.arange(geo.faces.shape[0]))


def test_locate_matches_scan(hierarchy):
    rng = np.random.default_rng(11)
    dirs = rng.normal(size=(200, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    geo = hierarchy.geometry(3)
    got = locate_faces(hierarchy, 3, dirs)
    for i in range(dirs.shape[0]):
        assert got[i] == locate_scan(geo.vertices, geo.faces, dirs[i])


def test_locate_rejects_non_unit(hierarchy):
    with pytest.raises(DomainError):
        locate_face(hierarchy, 2, np.array([1.0, 1.0, 0.0]))


def test_locate_vertex_tie_is_lowest(hierarchy):
    # A base-mesh vertex touches several faces; the rule is lowest index.
    geo0 = hierarchy.geometry(0)
    direction = geo0.vertices[0]
    f = locate_face(hierarchy, 0, direction)
    containing = []
    for face in range(20):
        tri = geo0.vertices[geo0.faces[face]]
        dets = [np.dot(np.cross(tri[k], tri[(k + 1) % 3]), direction) for k in range(3)]
        if min(dets) >= -1e-12:
            containing.append(face)
    assert f == min(containing)
