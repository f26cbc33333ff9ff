"""Differentiable operators on per-face spherical-mesh features.

A feature map is a Tensor of shape (F, C) where row i belongs to face i at
some subdivision level. Pooling and unpooling rely on the child layout:
face i at level L owns rows 4i..4i+3 at level L+1, so both ops are pure
index arithmetic with no lookup tables.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import LevelError, ShapeError


@dataclass
class MeshFeature:
    """Feature tensor tagged with its subdivision level."""

    mr: int
    values: Tensor

    @property
    def channels(self) -> int:
        return self.values.data.shape[1]


def mesh_conv_weight_shape(cin: int, cout: int):
    """Weight is one dense (4*Cin, Cout) block: self plus 3 edge neighbors."""
    return (4 * cin, cout)


def mesh_conv(x: Tensor, faf: np.ndarray, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Per-face dense layer over [self, neighbor0, neighbor1, neighbor2].

    Neighbor k is the face across edge (v_k, v_{k+1}); their features are
    concatenated after the face's own, then pushed through one linear map.
    """
    f, cin = x.data.shape
    if faf.shape != (f, 3):
        raise ShapeError(f"faf is {faf.shape}, features have {f} faces")
    if weight.data.shape[0] != 4 * cin:
        raise ShapeError(
            f"weight expects {weight.data.shape[0] // 4} input channels, features have {cin}"
        )
    neighbors = ad.gather(x, faf)  # (F, 3, Cin)
    stacked = ad.concat([ad.reshape(x, (f, 1, cin)), neighbors], axis=1)
    return ad.linear(ad.reshape(stacked, (f, 4 * cin)), weight, bias)


def mesh_max_pool(x: Tensor) -> Tensor:
    """(F, C) -> (F/4, C): max over each face's 4 children, ties to the lowest."""
    f, c = x.data.shape
    if f % 4 or f // 4 < 20:
        raise LevelError(f"cannot pool {f} faces; need a multiple of 4 with >= 20 parents")
    return ad.reduce_max(ad.reshape(x, (f // 4, 4, c)), axis=1)


def mesh_unpool(x: Tensor) -> Tensor:
    """(F, C) -> (4F, C): every child copies its parent's feature."""
    f = x.data.shape[0]
    return ad.gather(x, np.repeat(np.arange(f, dtype=np.int64), 4))


def mesh_res_block(
    x: Tensor,
    faf: np.ndarray,
    w1: Tensor,
    b1: Tensor,
    w2: Tensor,
    b2: Tensor,
    w_skip: Tensor | None = None,
) -> Tensor:
    """relu(skip(x) + conv2(relu(conv1(x)))); skip is a plain linear when
    the channel count changes, identity otherwise."""
    y = mesh_conv(ad.relu(mesh_conv(x, faf, w1, b1)), faf, w2, b2)
    if w_skip is not None:
        shortcut = ad.linear(x, w_skip)
    else:
        if x.data.shape[1] != y.data.shape[1]:
            raise ShapeError(
                f"residual needs w_skip when channels change ({x.data.shape[1]} -> {y.data.shape[1]})"
            )
        shortcut = x
    return ad.relu(ad.add(shortcut, y))
