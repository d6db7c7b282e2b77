"""Elementwise and structural ops with analytic backward passes."""

from __future__ import annotations

import numpy as np

from ..errors import NumericError, ShapeError
from .tensor import Tensor, as_tensor, make_op


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _raw(x):
    return x.data if isinstance(x, Tensor) else x


def add(a, b) -> Tensor:
    out = _raw(a) + _raw(b)
    a, b = as_tensor(a), as_tensor(b)
    return make_op(out, (a, b), lambda g: (_unbroadcast(g, a.shape) if a.requires_grad else None,
                                           _unbroadcast(g, b.shape) if b.requires_grad else None))


def sub(a, b) -> Tensor:
    out = _raw(a) - _raw(b)
    a, b = as_tensor(a), as_tensor(b)
    return make_op(out, (a, b), lambda g: (_unbroadcast(g, a.shape) if a.requires_grad else None,
                                           -_unbroadcast(g, b.shape) if b.requires_grad else None))


def mul(a, b) -> Tensor:
    ra, rb = _raw(a), _raw(b)
    out = ra * rb
    a, b = as_tensor(a), as_tensor(b)
    return make_op(out, (a, b), lambda g: (_unbroadcast(g * rb, a.shape) if a.requires_grad else None,
                                           _unbroadcast(g * ra, b.shape) if b.requires_grad else None))


def square(x: Tensor) -> Tensor:
    return make_op(x.data * x.data, (x,), lambda g: (2.0 * x.data * g,))


def sqrt(x: Tensor) -> Tensor:
    if np.any(x.data < 0):
        raise NumericError("sqrt of negative value")
    out = np.sqrt(x.data)

    def backward(g):
        with np.errstate(divide="ignore", invalid="ignore"):
            dg = np.where(out > 0, g / (2.0 * np.where(out > 0, out, 1.0)), 0.0)
        return (dg,)

    return make_op(out, (x,), backward)


def clamp_min(x: Tensor, floor: float) -> Tensor:
    """max(x, floor); the gradient flows only where x is above the floor."""
    keep = x.data > floor
    return make_op(np.where(keep, x.data, floor), (x,), lambda g: (g * keep,))


def log10(x: Tensor) -> Tensor:
    if np.any(x.data <= 0):
        raise NumericError("log10 of non-positive value")
    inv = 1.0 / (x.data * np.log(10.0))
    return make_op(np.log10(x.data), (x,), lambda g: (g * inv,))


def sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    out = np.sum(x.data, axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return make_op(np.asarray(out), (x,), backward)


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return mul(sum(x, axis=axis, keepdims=keepdims), 1.0 / n)


def reshape(x: Tensor, shape) -> Tensor:
    return make_op(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),), check=False)


def transpose(x: Tensor, axes=None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    inv = np.argsort(axes)
    return make_op(np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inv),), check=False)


def getitem(x: Tensor, index) -> Tensor:
    def backward(g):
        full = np.zeros_like(x.data)
        if _is_fancy(index):
            np.add.at(full, index, g)
        else:
            full[index] = g
        return (full,)

    return make_op(np.array(x.data[index]), (x,), backward, check=False)


def _is_fancy(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return any(isinstance(i, (list, np.ndarray)) for i in items)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return make_op(np.concatenate([t.data for t in tensors], axis=axis), tensors, backward, check=False)


def where_const(mask: np.ndarray, x: Tensor, value: float) -> Tensor:
    """Replace ``x`` by a constant where ``mask`` holds (no gradient there)."""
    return make_op(np.where(mask, value, x.data), (x,), lambda g: (np.where(mask, 0.0, g),))


def dot(a: Tensor, b) -> Tensor:
    """Full contraction <a, b>."""
    if as_tensor(b).shape != a.shape:
        raise ShapeError(f"dot operands differ: {a.shape} vs {as_tensor(b).shape}")
    return sum(mul(a, b))
