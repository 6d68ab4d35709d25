"""Differentiable operations on ``Tensor``.

Broadcasting is limited to adding (or multiplying by) a tensor whose shape
is a trailing suffix of the other operand's shape, which covers bias-add
and position-embedding add.
"""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from scipy import special

from app.core.errors import ShapeError
from app.tensor.tensor import Tensor, make_result

_INV_SQRT_2 = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _suffix_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape == b.shape:
        return
    if b.ndim <= a.ndim and a.shape[a.ndim - b.ndim:] == b.shape:
        return
    raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} are not compatible")


def _reduce_to(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    return grad.reshape((-1,) + shape).sum(axis=0)


def add(a: Tensor, b: Tensor) -> Tensor:
    _suffix_broadcast(a, b, "add")

    def vjp(g):
        return g, _reduce_to(g, b.shape)

    return make_result(a.data + b.data, "add", (a, b), vjp)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _suffix_broadcast(a, b, "sub")

    def vjp(g):
        return g, -_reduce_to(g, b.shape)

    return make_result(a.data - b.data, "sub", (a, b), vjp)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _suffix_broadcast(a, b, "mul")

    def vjp(g):
        return g * b.data, _reduce_to(g * a.data, b.shape)

    return make_result(a.data * b.data, "mul", (a, b), vjp)


def affine(x: Tensor, scale: float = 1.0, shift: float = 0.0) -> Tensor:
    """Elementwise ``x * scale + shift`` with constant scale and shift."""

    def vjp(g):
        return (g * scale,)

    return make_result(x.data * scale + shift, "affine", (x,), vjp)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of rank-2/3 tensors.

    Two rank-3 operands must share their batch extent; a rank-3 operand
    against a rank-2 one applies the same matrix to every batch element.
    """
    if not (2 <= a.ndim <= 3 and 2 <= b.ndim <= 3):
        raise ShapeError(f"matmul: ranks must be 2 or 3, got shapes {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner extents differ for shapes {a.shape} and {b.shape}")
    if a.ndim == 3 and b.ndim == 3 and a.shape[0] != b.shape[0]:
        raise ShapeError(f"matmul: batch extents differ for shapes {a.shape} and {b.shape}")

    def vjp(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        if ga.ndim > a.ndim:
            ga = ga.sum(axis=0)
        if gb.ndim > b.ndim:
            gb = gb.sum(axis=0)
        return ga, gb

    return make_result(np.matmul(a.data, b.data), "matmul", (a, b), vjp)


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    source = x.shape
    try:
        data = x.data.reshape(tuple(shape))
    except ValueError as exc:
        raise ShapeError(f"reshape: cannot view shape {source} as {tuple(shape)}") from exc

    def vjp(g):
        return (g.reshape(source),)

    return make_result(data, "reshape", (x,), vjp)


def transpose(x: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    if sorted(axes) != list(range(x.ndim)):
        raise ShapeError(f"transpose: {axes} is not a permutation of the axes of shape {x.shape}")
    inverse = tuple(int(i) for i in np.argsort(axes))

    def vjp(g):
        return (np.transpose(g, inverse),)

    return make_result(np.transpose(x.data, axes), "transpose", (x,), vjp)


def slice_lastdim(x: Tensor, start: int, stop: int) -> Tensor:
    width = x.shape[-1]
    if not 0 <= start < stop <= width:
        raise ShapeError(f"slice_lastdim: [{start}, {stop}) outside last extent {width}")

    def vjp(g):
        full = np.zeros(x.shape)
        full[..., start:stop] = g
        return (full,)

    return make_result(x.data[..., start:stop], "slice_lastdim", (x,), vjp)


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    tensors = tuple(tensors)
    if not tensors:
        raise ShapeError("concat: nothing to concatenate")
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        shapes = ", ".join(str(t.shape) for t in tensors)
        raise ShapeError(f"concat: incompatible shapes {shapes} along axis {axis}") from exc
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def vjp(g):
        return tuple(np.split(g, bounds, axis=axis))

    return make_result(data, "concat", tensors, vjp)


def repeat_batch(x: Tensor, n: int) -> Tensor:
    """Stack ``n`` copies of ``x`` along a new leading axis."""
    if n < 1:
        raise ShapeError(f"repeat_batch: count must be positive, got {n}")

    def vjp(g):
        return (g.sum(axis=0),)

    return make_result(np.broadcast_to(x.data, (n,) + x.shape), "repeat_batch", (x,), vjp)


def select(x: Tensor, axis: int, index: int) -> Tensor:
    """Take one position along ``axis``, dropping that axis."""
    if not -x.shape[axis] <= index < x.shape[axis]:
        raise ShapeError(f"select: index {index} outside extent {x.shape[axis]} of axis {axis}")

    def vjp(g):
        full = np.zeros(x.shape)
        slicer = [slice(None)] * x.ndim
        slicer[axis] = index
        full[tuple(slicer)] = g
        return (full,)

    return make_result(np.take(x.data, index, axis=axis), "select", (x,), vjp)


def sum(x: Tensor) -> Tensor:
    def vjp(g):
        return (np.broadcast_to(g, x.shape),)

    return make_result(np.sum(x.data), "sum", (x,), vjp)


def mean(x: Tensor) -> Tensor:
    count = x.size

    def vjp(g):
        return (np.broadcast_to(g / count, x.shape),)

    return make_result(np.mean(x.data), "mean", (x,), vjp)


def log(x: Tensor) -> Tensor:
    def vjp(g):
        return (g / x.data,)

    return make_result(np.log(x.data), "log", (x,), vjp)


def clip(x: Tensor, low: float, high: float) -> Tensor:
    """Clamp to ``[low, high]``; gradient flows only where no clamping happened."""
    inside = (x.data >= low) & (x.data <= high)

    def vjp(g):
        return (np.where(inside, g, 0.0),)

    return make_result(np.clip(x.data, low, high), "clip", (x,), vjp)


def softmax_lastdim(x: Tensor) -> Tensor:
    if x.ndim == 0 or x.shape[-1] < 1:
        raise ShapeError(f"softmax_lastdim: needs a non-empty last dimension, got {x.shape}")
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    y = exp / exp.sum(axis=-1, keepdims=True)

    def vjp(g):
        return (y * (g - np.sum(g * y, axis=-1, keepdims=True)),)

    return make_result(y, "softmax", (x,), vjp)


def layernorm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-6) -> Tensor:
    width = x.shape[-1]
    if gamma.shape != (width,) or beta.shape != (width,):
        raise ShapeError(
            f"layernorm: gamma {gamma.shape} and beta {beta.shape} must both be ({width},) for input {x.shape}"
        )
    if eps <= 0:
        raise ShapeError(f"layernorm: eps must be positive, got {eps}")
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    inv_std = 1.0 / np.sqrt((centered ** 2).mean(axis=-1, keepdims=True) + eps)
    xhat = centered * inv_std

    def vjp(g):
        dxhat = g * gamma.data
        dx = inv_std * (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        )
        dgamma = (g * xhat).reshape(-1, width).sum(axis=0)
        dbeta = g.reshape(-1, width).sum(axis=0)
        return dx, dgamma, dbeta

    return make_result(xhat * gamma.data + beta.data, "layernorm", (x, gamma, beta), vjp)


def gelu(x: Tensor) -> Tensor:
    """Exact GELU, ``x * Phi(x)`` with the Gaussian CDF via erf."""
    cdf = 0.5 * (1.0 + special.erf(x.data * _INV_SQRT_2))

    def vjp(g):
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * x.data ** 2)
        return (g * (cdf + x.data * pdf),)

    return make_result(x.data * cdf, "gelu", (x,), vjp)


def sigmoid(x: Tensor) -> Tensor:
    y = special.expit(x.data)

    def vjp(g):
        return (g * y * (1.0 - y),)

    return make_result(y, "sigmoid", (x,), vjp)


def dropout(x: Tensor, rate: float, rng: np.random.Generator | None) -> Tensor:
    """Inverted dropout; identity when ``rng`` is None or ``rate`` is 0."""
    if rng is None or rate == 0.0:
        return x
    if not 0.0 <= rate < 1.0:
        raise ShapeError(f"dropout: rate must lie in [0, 1), got {rate}")
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)

    def vjp(g):
        return (g * mask,)

    return make_result(x.data * mask, "dropout", (x,), vjp)
