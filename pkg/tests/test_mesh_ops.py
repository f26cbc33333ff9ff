import numpy as np
import pytest

from panomesh import autodiff as ad
from panomesh.autodiff import Tape, Tensor, finite_difference_check
from panomesh.errors import LevelError, ShapeError
from panomesh.mesh_ops import mesh_conv, mesh_max_pool, mesh_res_block, mesh_unpool
from reference_impls import mesh_conv_loops


@pytest.fixture(scope="module")
def mesh1(hierarchy, cache):
    return cache.get_mesh(hierarchy, 1)


def _feat(n, c, seed=0):
    rng = np.random.default_rng(seed)
    return Tensor(rng.normal(size=(n, c)), requires_grad=True)


def _vec(n, seed=0):
    rng = np.random.default_rng(seed)
    return Tensor(rng.normal(size=n), requires_grad=True)


def test_mesh_conv_matches_loop_reference(mesh1):
    rng = np.random.default_rng(1)
    x = Tensor(rng.normal(size=(80, 3)))
    w = Tensor(rng.normal(size=(12, 5)))
    b = Tensor(rng.normal(size=5))
    got = mesh_conv(x, mesh1.faf, w, b).data
    want = mesh_conv_loops(x.data, mesh1.faf, w.data, b.data)
    assert np.allclose(got, want, atol=1e-10)


def test_mesh_conv_fd(mesh1):
    x = _feat(80, 2, seed=2)
    w = _feat(8, 3, seed=3)
    b = _vec(3, seed=4)
    err = finite_difference_check(
        lambda x, w, b: ad.reduce_sum(ad.sigmoid(mesh_conv(x, mesh1.faf, w, b))),
        [x, w, b],
    )
    assert err < 1e-4


def test_mesh_conv_linear_in_input(mesh1):
    rng = np.random.default_rng(5)
    x = rng.normal(size=(80, 2))
    y = rng.normal(size=(80, 2))
    w = Tensor(rng.normal(size=(8, 4)))
    zero_b = Tensor(np.zeros(4))
    combo = mesh_conv(Tensor(2.0 * x - 3.0 * y), mesh1.faf, w, zero_b).data
    parts = 2.0 * mesh_conv(Tensor(x), mesh1.faf, w, zero_b).data - 3.0 * mesh_conv(
        Tensor(y), mesh1.faf, w, zero_b
    ).data
    assert np.allclose(combo, parts, atol=1e-12)


def test_mesh_conv_permutation_equivariant(mesh1):
    # Relabeling faces and their adjacency relabels the output identically.
    rng = np.random.default_rng(6)
    x = rng.normal(size=(80, 3))
    w = rng.normal(size=(12, 2))
    b = rng.normal(size=2)
    perm = rng.permutation(80)
    inv = np.empty(80, dtype=np.int64)
    inv[perm] = np.arange(80)
    faf_perm = inv[mesh1.faf[perm]]
    base = mesh_conv(Tensor(x), mesh1.faf, Tensor(w), Tensor(b)).data
    moved = mesh_conv(Tensor(x[perm]), faf_perm, Tensor(w), Tensor(b)).data
    assert np.allclose(moved, base[perm], atol=1e-12)


def test_mesh_conv_shape_errors(mesh1):
    with pytest.raises(ShapeError):
        mesh_conv(Tensor(np.zeros((81, 3))), mesh1.faf, Tensor(np.zeros((12, 5))))
    with pytest.raises(ShapeError):
        mesh_conv(Tensor(np.zeros((80, 3))), mesh1.faf, Tensor(np.zeros((13, 5))))


def test_max_pool_values_and_ties():
    rng = np.random.default_rng(7)
    x = rng.normal(size=(80, 4))
    got = mesh_max_pool(Tensor(x)).data
    want = x.reshape(20, 4, 4).max(axis=1)
    assert np.array_equal(got, want)

    tied = np.zeros((80, 1))
    tied[4:8] = 1.0  # all four children of parent 1 tie
    t = Tensor(tied, requires_grad=True)
    with Tape() as tape:
        y = ad.reduce_sum(mesh_max_pool(t))
    tape.backward(y)
    assert t.grad[4, 0] == 1.0 and np.all(t.grad[5:8] == 0.0)


def test_max_pool_rejects_base_level():
    with pytest.raises(LevelError):
        mesh_max_pool(Tensor(np.zeros((20, 2))))
    with pytest.raises(LevelError):
        mesh_max_pool(Tensor(np.zeros((81, 2))))


def test_unpool_replicates_parent():
    rng = np.random.default_rng(8)
    x = rng.normal(size=(20, 3))
    up = mesh_unpool(Tensor(x)).data
    assert up.shape == (80, 3)
    for i in range(20):
        assert np.array_equal(up[4 * i : 4 * i + 4], np.tile(x[i], (4, 1)))


def test_unpool_gradient_sums_children():
    x = Tensor(np.random.default_rng(9).normal(size=(20, 2)), requires_grad=True)
    seed = np.arange(160.0).reshape(80, 2)
    with Tape() as tape:
        y = ad.reduce_sum(ad.mul(mesh_unpool(x), Tensor(seed)))
    tape.backward(y)
    assert np.allclose(x.grad, seed.reshape(20, 4, 2).sum(axis=1))


def test_pool_unpool_fd():
    x = _feat(80, 3, seed=10)
    err = finite_difference_check(
        lambda x: ad.reduce_sum(ad.mul(mesh_unpool(mesh_max_pool(x)), x)), [x]
    )
    assert err < 1e-4


def test_res_block_shapes_and_fd(mesh1):
    x = _feat(80, 2, seed=11)
    w1 = _feat(8, 4, seed=12)
    b1 = _vec(4, seed=13)
    w2 = _feat(16, 4, seed=14)
    b2 = _vec(4, seed=15)
    skip = _feat(2, 4, seed=16)
    out = mesh_res_block(x, mesh1.faf, w1, b1, w2, b2, skip)
    assert out.data.shape == (80, 4)
    err = finite_difference_check(
        lambda *ts: ad.reduce_sum(ad.mul(r := mesh_res_block(ts[0], mesh1.faf, *ts[1:]), r)),
        [x, w1, b1, w2, b2, skip],
        samples=6,
    )
    assert err < 1e-4


def test_res_block_identity_skip_needs_matching_channels(mesh1):
    x = Tensor(np.zeros((80, 2)))
    w1 = Tensor(np.zeros((8, 4)))
    b1 = Tensor(np.zeros(4))
    w2 = Tensor(np.zeros((16, 4)))
    b2 = Tensor(np.zeros(4))
    with pytest.raises(ShapeError):
        mesh_res_block(x, mesh1.faf, w1, b1, w2, b2, None)
