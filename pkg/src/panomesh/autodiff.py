"""Minimal reverse-mode automatic differentiation on float64 numpy arrays.

A Tape records every op executed while it is active (module-level stack,
entered via `with Tape() as t`). Each record holds the output tensor, the
input tensors, and a closure mapping the output gradient to input gradients.
`Tape.backward(loss)` walks the records in reverse execution order and
accumulates gradients keyed by tensor identity, so any DAG built from these
ops differentiates correctly without graph surgery.

Ops cover what the depth network needs: arithmetic, relu/sigmoid/softplus,
concat/reshape/row-gather, dense and 2-D convolution layers (convolution pads
width circularly because longitude wraps, height with zeros), sum/mean/max
reductions, and the elementwise reverse-Huber loss with its exact derivative.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError
from .kernels import scatter_add_flat, scatter_add_rows


class Tensor:
    """Array plus gradient slot; float64 always."""

    __slots__ = ("data", "grad", "requires_grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}{tag})"

    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        return mul(self, _wrap(other))

    def __rmul__(self, other):
        return mul(_wrap(other), self)

    def __neg__(self):
        return neg(self)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


_TAPE_STACK: list["Tape"] = []


class Tape:
    def __init__(self):
        self.records = []  # (out, inputs, backward_fn) in execution order

    def __enter__(self):
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, *exc):
        popped = _TAPE_STACK.pop()
        assert popped is self
        return False

    def backward(self, loss: Tensor, seed=None):
        """Populate .grad on every requires_grad tensor reachable from loss."""
        if seed is None:
            if loss.data.size != 1:
                raise ShapeError("backward() needs a scalar loss or an explicit seed")
            seed = np.ones_like(loss.data)
        grads = {id(loss): np.asarray(seed, dtype=np.float64)}
        alive = {id(loss): loss}
        for out, inputs, backward in reversed(self.records):
            g = grads.pop(id(out), None)
            alive.pop(id(out), None)
            if g is None:
                continue
            for inp, gi in zip(inputs, backward(g)):
                if gi is None or not inp.requires_grad:
                    continue
                prev = grads.get(id(inp))
                grads[id(inp)] = gi if prev is None else prev + gi
                alive[id(inp)] = inp
        for key, tensor in alive.items():
            g = grads[key]
            tensor.grad = g if tensor.grad is None else tensor.grad + g


def _record(out: Tensor, inputs, backward):
    if _TAPE_STACK and out.requires_grad:
        _TAPE_STACK[-1].records.append((out, tuple(inputs), backward))


def _needs(*tensors) -> bool:
    return any(t.requires_grad for t in tensors)


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    """Sum a broadcast gradient back down to the operand's shape."""
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# -- arithmetic ----------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data + b.data, requires_grad=_needs(a, b))
    _record(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data - b.data, requires_grad=_needs(a, b))
    _record(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data * b.data, requires_grad=_needs(a, b))
    _record(
        out,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )
    return out


def neg(a: Tensor) -> Tensor:
    out = Tensor(-a.data, requires_grad=a.requires_grad)
    _record(out, (a,), lambda g: (-g,))
    return out


# -- activations ---------------------------------------------------------

def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    out = Tensor(np.where(mask, a.data, 0.0), requires_grad=a.requires_grad)
    _record(out, (a,), lambda g: (g * mask,))
    return out


def _sigmoid_stable(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a: Tensor) -> Tensor:
    s = _sigmoid_stable(a.data)
    out = Tensor(s, requires_grad=a.requires_grad)
    _record(out, (a,), lambda g: (g * s * (1.0 - s),))
    return out


def softplus(a: Tensor) -> Tensor:
    x = a.data
    out = Tensor(np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x))), requires_grad=a.requires_grad)
    _record(out, (a,), lambda g: (g * _sigmoid_stable(x),))
    return out


# -- shape ops -----------------------------------------------------------

def reshape(a: Tensor, shape) -> Tensor:
    out = Tensor(a.data.reshape(shape), requires_grad=a.requires_grad)
    _record(out, (a,), lambda g: (g.reshape(a.shape),))
    return out


def transpose(a: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    out = Tensor(a.data.transpose(axes), requires_grad=a.requires_grad)
    inv = tuple(np.argsort(axes))
    _record(out, (a,), lambda g: (g.transpose(inv),))
    return out


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [_wrap(t) for t in tensors]
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis), requires_grad=_needs(*tensors))
    sizes = [t.data.shape[axis] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    _record(out, tensors, backward)
    return out


def gather(a: Tensor, index) -> Tensor:
    """Index the first axis; gradient scatter-adds back (repeats accumulate)."""
    index = np.asarray(index, dtype=np.int64)
    out = Tensor(a.data[index], requires_grad=a.requires_grad)

    def backward(g):
        flat_idx = np.ascontiguousarray(index.reshape(-1))
        if a.data.ndim == 2:
            rows = np.ascontiguousarray(g.reshape(-1, a.data.shape[1]))
            return (scatter_add_rows(rows, flat_idx, a.data.shape[0]),)
        if a.data.ndim == 1:
            return (scatter_add_flat(np.ascontiguousarray(g.reshape(-1)), flat_idx, a.data.shape[0]),)
        gx = np.zeros_like(a.data)
        np.add.at(gx, flat_idx, g.reshape((-1,) + a.data.shape[1:]))
        return (gx,)

    _record(out, (a,), backward)
    return out


# -- reductions ----------------------------------------------------------

def reduce_sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = Tensor(a.data.sum(axis=axis, keepdims=keepdims), requires_grad=a.requires_grad)

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, a.shape).copy(),)

    _record(out, (a,), backward)
    return out


def reduce_mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    count = a.data.size if axis is None else a.data.shape[axis]
    out = Tensor(a.data.mean(axis=axis, keepdims=keepdims), requires_grad=a.requires_grad)

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g / count, a.shape).copy(),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg / count, a.shape).copy(),)

    _record(out, (a,), backward)
    return out


def reduce_max(a: Tensor, axis: int, keepdims: bool = False) -> Tensor:
    """Max over one axis; ties send the gradient to the lowest index."""
    arg = np.argmax(a.data, axis=axis)
    out_data = np.take_along_axis(a.data, np.expand_dims(arg, axis), axis=axis)
    out = Tensor(out_data if keepdims else out_data.squeeze(axis), requires_grad=a.requires_grad)

    def backward(g):
        gg = g if keepdims else np.expand_dims(g, axis)
        gx = np.zeros_like(a.data)
        np.put_along_axis(gx, np.expand_dims(arg, axis), gg, axis=axis)
        return (gx,)

    _record(out, (a,), backward)
    return out


# -- layers --------------------------------------------------------------

def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """x (N, Cin) @ weight (Cin, Cout) + bias (Cout,)."""
    if x.data.ndim != 2 or weight.data.ndim != 2 or x.data.shape[1] != weight.data.shape[0]:
        raise ShapeError(
            f"linear shapes mismatch: x {x.data.shape} vs weight {weight.data.shape}"
        )
    y = x.data @ weight.data
    if bias is not None:
        y = y + bias.data
    inputs = (x, weight) if bias is None else (x, weight, bias)
    out = Tensor(y, requires_grad=_needs(*inputs))

    def backward(g):
        gx = g @ weight.data.T
        gw = x.data.T @ g
        if bias is None:
            return (gx, gw)
        return (gx, gw, g.sum(axis=0))

    _record(out, inputs, backward)
    return out


def _pad_hw(x: np.ndarray, pad: int) -> np.ndarray:
    # Zero rows top/bottom (latitude ends at the poles), wrapped columns
    # (longitude is periodic).
    if pad == 0:
        return x
    x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (0, 0)))
    return np.pad(x, ((0, 0), (0, 0), (0, 0), (pad, pad)), mode="wrap")


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1) -> Tensor:
    """Cross-correlation of x (N, Cin, H, W) with weight (Cout, Cin, k, k).

    Odd k only; padding is fixed at (k-1)/2 so stride 1 preserves H, W and
    stride 2 halves them for even inputs.
    """
    n, cin, h, w = x.data.shape
    cout, cin_w, kh, kw = weight.data.shape
    if cin != cin_w or kh != kw or kh % 2 == 0:
        raise ShapeError(
            f"conv2d wants odd square kernels with matching channels, got x {x.data.shape} weight {weight.data.shape}"
        )
    k, p, s = kh, (kh - 1) // 2, stride
    xp = _pad_hw(x.data, p)
    windows = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(2, 3))
    windows = windows[:, :, ::s, ::s]
    y = np.einsum("nchwij,ocij->nohw", windows, weight.data, optimize=True)
    if bias is not None:
        y = y + bias.data[None, :, None, None]
    inputs = (x, weight) if bias is None else (x, weight, bias)
    out = Tensor(y, requires_grad=_needs(*inputs))
    ho, wo = y.shape[2], y.shape[3]

    def backward(g):
        gw = np.einsum("nohw,nchwij->ocij", g, windows, optimize=True)
        gxp = np.zeros_like(xp)
        for i in range(k):
            for j in range(k):
                contrib = np.einsum("nohw,oc->nchw", g, weight.data[:, :, i, j], optimize=True)
                gxp[:, :, i : i + s * ho : s, j : j + s * wo : s] += contrib
        gx = gxp[:, :, p : p + h, p : p + w].copy()
        if p:
            gx[:, :, :, w - p :] += gxp[:, :, p : p + h, :p]
            gx[:, :, :, :p] += gxp[:, :, p : p + h, w + p :]
        if bias is None:
            return (gx, gw)
        return (gx, gw, g.sum(axis=(0, 2, 3)))

    _record(out, inputs, backward)
    return out


# -- reverse-Huber -------------------------------------------------------

def berhu_elementwise(pred: Tensor, target: Tensor, threshold: float = 0.2) -> Tensor:
    """|d| below the threshold, (d^2 + T^2) / (2T) at or above it.

    The two branches meet at |d| = T with equal value and slope, so the
    gradient is continuous: sign(d) inside, d / T outside.
    """
    t = float(threshold)
    if t <= 0:
        raise ShapeError(f"threshold must be positive, got {t}")
    d = pred.data - target.data
    small = np.abs(d) <= t
    vals = np.where(small, np.abs(d), (d * d + t * t) / (2.0 * t))
    out = Tensor(vals, requires_grad=_needs(pred, target))

    def backward(g):
        slope = np.where(small, np.sign(d), d / t)
        return (g * slope, -g * slope)

    _record(out, (pred, target), backward)
    return out


# -- parameters and optimizer ---------------------------------------------

class Parameters:
    """Named trainable tensors with checkpoint round-tripping."""

    def __init__(self):
        self._items: dict[str, Tensor] = {}

    def add(self, name: str, data) -> Tensor:
        if name in self._items:
            raise ShapeError(f"duplicate parameter name {name!r}")
        t = Tensor(data, requires_grad=True, name=name)
        self._items[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._items[name]

    def __contains__(self, name: str) -> bool:
        return name in self._items

    def __len__(self):
        return len(self._items)

    def names(self):
        return list(self._items)

    def tensors(self):
        return list(self._items.values())

    def zero_grad(self):
        for t in self._items.values():
            t.grad = None

    def state_dict(self) -> dict:
        return {name: t.data.copy() for name, t in self._items.items()}

    def load_state_dict(self, state: dict):
        missing = set(self._items) - set(state)
        extra = set(state) - set(self._items)
        if missing or extra:
            raise ShapeError(f"checkpoint mismatch: missing {sorted(missing)}, extra {sorted(extra)}")
        for name, arr in state.items():
            t = self._items[name]
            arr = np.asarray(arr, dtype=np.float64)
            if arr.shape != t.data.shape:
                raise ShapeError(f"parameter {name!r}: shape {arr.shape} != {t.data.shape}")
            t.data = arr.copy()

    def save(self, path):
        from .formats import write_sfck

        write_sfck(path, self.state_dict())

    def load(self, path):
        from .formats import read_sfck

        self.load_state_dict(read_sfck(path))


class Adam:
    def __init__(self, params, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params.tensors() if isinstance(params, Parameters) else list(params)
        self.lr = float(lr)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def scale_lr(self, factor: float):
        self.lr *= factor

    def step(self):
        self.t += 1
        b1t = 1.0 - self.beta1**self.t
        b2t = 1.0 - self.beta2**self.t
        for p, m, v in zip(self.params, self._m, self._v):
            if p.grad is None:
                continue
            g = p.grad
            m += (1.0 - self.beta1) * (g - m)
            v += (1.0 - self.beta2) * (g * g - v)
            p.data -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)


def halved_lr(base_lr: float, epoch: int, every: int) -> float:
    """Step schedule: halve the rate after each `every` epochs."""
    if every <= 0:
        return base_lr
    return base_lr * 0.5 ** (epoch // every)


# -- gradient checking -----------------------------------------------------

def finite_difference_check(fn, tensors, h: float = 1e-5, samples: int | None = None, seed: int = 0):
    """Compare tape gradients of scalar fn(tensors...) against central differences.

    Returns the worst relative error over checked coordinates. `samples`
    bounds how many coordinates per tensor get perturbed (None = all).
    """
    for t in tensors:
        t.grad = None
    with Tape() as tape:
        loss = fn(*tensors)
    tape.backward(loss)
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in tensors]

    rng = np.random.default_rng(seed)
    worst = 0.0
    for t, a in zip(tensors, analytic):
        flat = t.data.reshape(-1)
        n = flat.size
        coords = np.arange(n) if samples is None or samples >= n else rng.choice(n, size=samples, replace=False)
        for c in coords:
            orig = flat[c]
            flat[c] = orig + h
            up = fn(*tensors).item()
            flat[c] = orig - h
            dn = fn(*tensors).item()
            flat[c] = orig
            fd = (up - dn) / (2.0 * h)
            ref = a.reshape(-1)[c]
            err = abs(ref - fd) / max(abs(ref), abs(fd), 1e-6)
            worst = max(worst, err)
    return worst


def finite_difference_direction(fn, tensors, h: float = 1e-5, n_dirs: int = 8, seed: int = 0):
    """Directional-derivative variant of the check above.

    Perturbs every coordinate of every tensor at once along random unit
    directions and compares the central difference with dot(grad, dir).
    Aggregating over the whole parameter vector keeps the derivative well
    above float noise even when individual coordinates have tiny gradients,
    which makes this the right tool for whole-model checks. Returns the
    worst relative error over directions.
    """
    for t in tensors:
        t.grad = None
    with Tape() as tape:
        loss = fn(*tensors)
    tape.backward(loss)
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in tensors]

    rng = np.random.default_rng(seed)
    saved = [t.data.copy() for t in tensors]
    worst = 0.0
    for _ in range(n_dirs):
        dirs = [rng.normal(size=t.data.shape) for t in tensors]
        norm = np.sqrt(sum(float(np.sum(d * d)) for d in dirs))
        dirs = [d / norm for d in dirs]
        ref = sum(float(np.sum(a * d)) for a, d in zip(analytic, dirs))
        for t, s, d in zip(tensors, saved, dirs):
            t.data[...] = s + h * d
        up = fn(*tensors).item()
        for t, s, d in zip(tensors, saved, dirs):
            t.data[...] = s - h * d
        dn = fn(*tensors).item()
        fd = (up - dn) / (2.0 * h)
        err = abs(ref - fd) / max(abs(ref), abs(fd), 1e-6)
        worst = max(worst, err)
    for t, s in zip(tensors, saved):
        t.data[...] = s
    return worst
