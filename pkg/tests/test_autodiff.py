import numpy as np
import pytest

from panomesh import autodiff as ad
from panomesh.autodiff import (
    Adam,
    Parameters,
    Tape,
    Tensor,
    finite_difference_check,
    finite_difference_direction,
    halved_lr,
)
from panomesh.errors import ShapeError
from reference_impls import conv2d_loops

FD_TOL = 1e-4


def _rand(*shape, seed=0, scale=1.0):
    rng = np.random.default_rng(seed)
    return Tensor(scale * rng.normal(size=shape), requires_grad=True)


def test_fd_add_mul_sub_neg():
    a = _rand(4, 3, seed=1)
    b = _rand(4, 3, seed=2)
    err = finite_difference_check(
        lambda a, b: ad.reduce_sum(ad.mul(ad.add(a, b), ad.sub(a, ad.neg(b)))), [a, b]
    )
    assert err < FD_TOL


def test_fd_directional_matches_known_gradient():
    # f = sum(a*a) + sum(a*b): grad_a = 2a + b, grad_b = a
    a = _rand(5, 3, seed=11)
    b = _rand(5, 3, seed=12)
    err = finite_difference_direction(
        lambda a, b: ad.add(ad.reduce_sum(ad.mul(a, a)), ad.reduce_sum(ad.mul(a, b))),
        [a, b],
        n_dirs=6,
    )
    assert err < 1e-7

    with Tape() as tape:
        loss = ad.add(ad.reduce_sum(ad.mul(a, a)), ad.reduce_sum(ad.mul(a, b)))
    a.grad = b.grad = None
    tape.backward(loss)
    np.testing.assert_allclose(a.grad, 2 * a.data + b.data, atol=1e-12)
    np.testing.assert_allclose(b.grad, a.data, atol=1e-12)


def test_fd_directional_restores_data():
    a = _rand(4, 4, seed=13)
    before = a.data.copy()
    finite_difference_direction(lambda a: ad.reduce_sum(ad.mul(a, a)), [a], n_dirs=3)
    np.testing.assert_array_equal(a.data, before)


def test_fd_broadcasting():
    a = _rand(4, 3, seed=3)
    b = _rand(3, seed=4)  # broadcasts across rows
    err = finite_difference_check(lambda a, b: ad.reduce_sum(ad.mul(a, b)), [a, b])
    assert err < FD_TOL


def test_fd_activations():
    x = _rand(5, 4, seed=5)
    for op in (ad.relu, ad.sigmoid, ad.softplus):
        err = finite_difference_check(lambda x, op=op: ad.reduce_sum(op(x)), [x])
        assert err < FD_TOL, op.__name__


def test_fd_reshape_transpose_concat():
    a = _rand(4, 6, seed=6)
    b = _rand(2, 6, seed=7)
    err = finite_difference_check(
        lambda a, b: ad.reduce_sum(
            ad.mul(ad.concat([a, b], axis=0), ad.concat([a, b], axis=0))
        ),
        [a, b],
    )
    assert err < FD_TOL
    err = finite_difference_check(
        lambda a: ad.reduce_sum(ad.sigmoid(ad.transpose(ad.reshape(a, (3, 8)), (1, 0)))), [a]
    )
    assert err < FD_TOL


def test_fd_gather_with_repeats():
    x = _rand(6, 3, seed=8)
    idx = np.array([0, 2, 2, 5, 0, 0])
    err = finite_difference_check(
        lambda x: ad.reduce_sum(ad.mul(ad.gather(x, idx), ad.gather(x, idx))), [x]
    )
    assert err < FD_TOL


def test_fd_reductions():
    x = _rand(4, 5, seed=9)
    for fn in (
        lambda x: ad.reduce_sum(x),
        lambda x: ad.reduce_mean(ad.mul(x, x)),
        lambda x: ad.reduce_sum(ad.reduce_mean(x, axis=1)),
        lambda x: ad.reduce_sum(ad.reduce_max(x, axis=0)),
        lambda x: ad.reduce_sum(ad.reduce_max(x, axis=1, keepdims=True)),
    ):
        assert finite_difference_check(fn, [x]) < FD_TOL


def test_fd_linear():
    x = _rand(5, 4, seed=10)
    w = _rand(4, 3, seed=11)
    b = _rand(3, seed=12)
    err = finite_difference_check(
        lambda x, w, b: ad.reduce_sum(ad.sigmoid(ad.linear(x, w, b))), [x, w, b]
    )
    assert err < FD_TOL


@pytest.mark.parametrize("stride", [1, 2])
@pytest.mark.parametrize("k", [1, 3])
def test_fd_conv2d(stride, k):
    x = _rand(1, 2, 4, 8, seed=13)
    w = _rand(3, 2, k, k, seed=14)
    b = _rand(3, seed=15)
    err = finite_difference_check(
        lambda x, w, b: ad.reduce_sum(ad.mul(c := ad.conv2d(x, w, b, stride=stride), c)),
        [x, w, b],
    )
    assert err < FD_TOL


def test_conv2d_matches_loop_reference():
    rng = np.random.default_rng(16)
    x = rng.normal(size=(2, 3, 6, 10))
    w = rng.normal(size=(4, 3, 3, 3))
    b = rng.normal(size=4)
    for stride in (1, 2):
        got = ad.conv2d(Tensor(x), Tensor(w), Tensor(b), stride=stride).data
        want = conv2d_loops(x, w, b, stride=stride)
        assert np.allclose(got, want, atol=1e-10), stride


def test_conv2d_wraps_longitude_not_latitude():
    # An impulse at the left edge bleeds to the right edge (wrap) but a top
    # row impulse gets zeros above it (clamped by zero padding).
    x = np.zeros((1, 1, 4, 8))
    x[0, 0, 2, 0] = 1.0
    w = np.ones((1, 1, 3, 3))
    out = ad.conv2d(Tensor(x), Tensor(w), None).data[0, 0]
    assert out[2, 7] == 1.0 and out[2, 1] == 1.0
    top = np.zeros((1, 1, 4, 8))
    top[0, 0, 0, 4] = 1.0
    out_top = ad.conv2d(Tensor(top), Tensor(w), None).data[0, 0]
    assert out_top[0, 4] == 1.0  # no phantom contribution from "above"
    assert out_top[1, 4] == 1.0


def test_fd_berhu():
    rng = np.random.default_rng(17)
    pred = Tensor(rng.normal(size=20), requires_grad=True)
    target = Tensor(rng.normal(size=20) + 0.05, requires_grad=True)
    # Keep differences away from the kink so central differences are clean.
    near = np.abs(np.abs(pred.data - target.data) - 0.2) < 1e-3
    pred.data[near] += 0.01
    err = finite_difference_check(
        lambda p, t: ad.reduce_sum(ad.berhu_elementwise(p, t, 0.2)), [pred, target]
    )
    assert err < FD_TOL


def test_tensor_reuse_accumulates():
    x = Tensor(np.array([2.0]), requires_grad=True)
    with Tape() as tape:
        y = ad.add(ad.mul(x, x), x)  # y = x^2 + x, dy/dx = 2x + 1 = 5
    tape.backward(y)
    assert np.allclose(x.grad, [5.0])


def test_no_tape_records_nothing():
    x = Tensor(np.ones(3), requires_grad=True)
    y = ad.mul(x, x)
    assert y.requires_grad
    t = Tape()
    assert t.records == []


def test_backward_needs_scalar():
    x = Tensor(np.ones(3), requires_grad=True)
    with Tape() as tape:
        y = ad.mul(x, x)
    with pytest.raises(ShapeError):
        tape.backward(y)


def test_constant_inputs_get_no_grad():
    x = Tensor(np.ones(3), requires_grad=True)
    c = Tensor(np.full(3, 2.0))
    with Tape() as tape:
        y = ad.reduce_sum(ad.mul(x, c))
    tape.backward(y)
    assert c.grad is None
    assert np.allclose(x.grad, 2.0)


def test_reduce_max_tie_goes_to_lowest():
    x = Tensor(np.array([[1.0, 3.0, 3.0, 0.0]]), requires_grad=True)
    with Tape() as tape:
        y = ad.reduce_sum(ad.reduce_max(x, axis=1))
    tape.backward(y)
    assert np.array_equal(x.grad, [[0.0, 1.0, 0.0, 0.0]])


def test_operator_sugar():
    x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    y = 2.0 * x + 1.0 - (-x)
    assert np.allclose(y.data, [4.0, 7.0])


def test_softplus_stable_at_extremes():
    x = Tensor(np.array([-800.0, 0.0, 800.0]))
    y = ad.softplus(x)
    assert np.all(np.isfinite(y.data))
    assert y.data[0] == 0.0
    assert np.isclose(y.data[1], np.log(2.0))
    assert np.isclose(y.data[2], 800.0)


def test_parameters_roundtrip(tmp_path):
    p = Parameters()
    p.add("a.w", np.arange(6.0).reshape(2, 3))
    p.add("a.b", np.zeros(3))
    path = tmp_path / "ck.sfck"
    p.save(path)
    q = Parameters()
    q.add("a.w", np.zeros((2, 3)))
    q.add("a.b", np.ones(3))
    q.load(path)
    assert np.array_equal(q["a.w"].data, p["a.w"].data)
    assert np.array_equal(q["a.b"].data, p["a.b"].data)
    with pytest.raises(ShapeError):
        p.add("a.w", np.zeros(1))


def test_parameters_load_mismatch(tmp_path):
    p = Parameters()
    p.add("only", np.ones(2))
    path = tmp_path / "ck.sfck"
    p.save(path)
    q = Parameters()
    q.add("other", np.ones(2))
    with pytest.raises(ShapeError):
        q.load(path)


def test_adam_minimizes_quadratic():
    x = Tensor(np.array([5.0, -3.0]), requires_grad=True)
    opt = Adam([x], lr=0.1)
    for _ in range(300):
        opt.zero_grad()
        with Tape() as tape:
            loss = ad.reduce_sum(ad.mul(x, x))
        tape.backward(loss)
        opt.step()
    assert np.all(np.abs(x.data) < 1e-2)


def test_adam_skips_gradless_params():
    x = Tensor(np.ones(2), requires_grad=True)
    y = Tensor(np.ones(2), requires_grad=True)
    opt = Adam([x, y], lr=0.5)
    opt.zero_grad()
    with Tape() as tape:
        loss = ad.reduce_sum(ad.mul(x, x))
    tape.backward(loss)
    opt.step()
    assert np.array_equal(y.data, np.ones(2))
    assert not np.array_equal(x.data, np.ones(2))


def test_halved_lr_schedule():
    assert halved_lr(0.2, 0, 10) == 0.2
    assert halved_lr(0.2, 9, 10) == 0.2
    assert halved_lr(0.2, 10, 10) == 0.1
    assert halved_lr(0.2, 25, 10) == 0.05
