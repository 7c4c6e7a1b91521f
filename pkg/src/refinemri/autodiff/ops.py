"""Elementwise, reduction and shape operations on :class:`Tensor`."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, as_tensor, make_node


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def add(a, b) -> Tensor:
    a = as_tensor(a, b if isinstance(b, Tensor) else None)
    b = as_tensor(b, a)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return make_node(a.data + b.data, (a, b), backward)


def sub(a, b) -> Tensor:
    a = as_tensor(a, b if isinstance(b, Tensor) else None)
    b = as_tensor(b, a)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return make_node(a.data - b.data, (a, b), backward)


def mul(a, b) -> Tensor:
    a = as_tensor(a, b if isinstance(b, Tensor) else None)
    b = as_tensor(b, a)

    def backward(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return make_node(a.data * b.data, (a, b), backward)


def div(a, b) -> Tensor:
    a = as_tensor(a, b if isinstance(b, Tensor) else None)
    b = as_tensor(b, a)
    out = a.data / b.data

    def backward(g):
        ga = _unbroadcast(g / b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(-g * out / b.data, b.shape) if b.requires_grad else None
        return ga, gb

    return make_node(out, (a, b), backward)


def power(x: Tensor, exponent: float) -> Tensor:
    def backward(g):
        return (g * exponent * x.data ** (exponent - 1),)

    return make_node(x.data**exponent, (x,), backward)


def square(x: Tensor) -> Tensor:
    def backward(g):
        return (2.0 * g * x.data,)

    return make_node(x.data * x.data, (x,), backward)


def sqrt(x: Tensor) -> Tensor:
    out = np.sqrt(x.data)

    def backward(g):
        return (g * 0.5 / out,)

    return make_node(out, (x,), backward)


def abs(x: Tensor) -> Tensor:  # noqa: A001
    def backward(g):
        return (g * np.sign(x.data),)

    return make_node(np.abs(x.data), (x,), backward)


def log(x: Tensor) -> Tensor:
    def backward(g):
        return (g / x.data,)

    return make_node(np.log(x.data), (x,), backward)


def clip(x: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp values; gradient passes only where the input lies inside the range."""

    def backward(g):
        inside = (x.data >= lo) & (x.data <= hi)
        return (g * inside,)

    return make_node(np.clip(x.data, lo, hi), (x,), backward)


def sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return make_node(np.asarray(x.data.sum(axis=axis, keepdims=keepdims)), (x,), backward)


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        count = x.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        count = int(np.prod([x.shape[a] for a in axes]))
    scale = 1.0 / count

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g * scale, x.shape).astype(x.dtype),)

    return make_node(np.asarray(x.data.mean(axis=axis, keepdims=keepdims)), (x,), backward)


def reshape(x: Tensor, shape) -> Tensor:
    def backward(g):
        return (g.reshape(x.shape),)

    return make_node(x.data.reshape(shape), (x,), backward)


def getitem(x: Tensor, index) -> Tensor:
    """Basic (view) indexing; advanced integer arrays with repeats are not supported."""

    def backward(g):
        full = np.zeros_like(x.data)
        full[index] = g
        return (full,)

    return make_node(np.array(x.data[index]), (x,), backward)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = list(tensors)
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def backward(g):
        out = []
        for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            out.append(g[tuple(sl)])
        return out

    return make_node(np.concatenate([t.data for t in tensors], axis=axis), tensors, backward)


def stack(tensors, axis: int = 0) -> Tensor:
    tensors = list(tensors)

    def backward(g):
        return [np.take(g, i, axis=axis) for i in range(len(tensors))]

    return make_node(np.stack([t.data for t in tensors], axis=axis), tensors, backward)


def magnitude(x: Tensor, eps: float = 1e-12) -> Tensor:
    """|re + i·im| per pixel of a ``[B, 2, H, W]`` tensor, keeping a channel axis.

    ``eps`` keeps the derivative finite at exact zeros.
    """
    re, im = x.data[:, 0:1], x.data[:, 1:2]
    out = np.sqrt(re * re + im * im + eps)

    def backward(g):
        return (np.concatenate([g * re / out, g * im / out], axis=1),)

    return make_node(out, (x,), backward)
