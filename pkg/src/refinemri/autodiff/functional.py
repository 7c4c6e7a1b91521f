"""Layer primitives: convolutions, batch normalization, activations, dropout.

Convolutions are cross-correlations (no kernel flip) computed as one matrix
product against a channels-last patch matrix. The matching col2im scatter is
the forward pass of :func:`conv_transpose2d`, so the two are adjoints by
construction.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, as_tensor, make_node


class ShapeError(ValueError):
    """Incompatible tensor dimensions for an operation."""


class ConfigurationError(ValueError):
    """Invalid layer hyper-parameters (stride, padding, rates, ...)."""


def _out_extent(size: int, kernel: int, stride: int, padding: int, axis: str) -> int:
    span = size + 2 * padding - kernel
    if span < 0 or stride < 1:
        raise ConfigurationError(
            f"{axis}: kernel {kernel} does not fit size {size} with padding {padding} (stride {stride})"
        )
    return span // stride + 1


def _im2col(x: np.ndarray, kh: int, kw: int, stride: int, padding: int, ho: int, wo: int) -> np.ndarray:
    """``[B, C, H, W]`` → ``[B·Ho·Wo, kh·kw·C]`` patch matrix (channels fastest)."""
    b, c, h, w = x.shape
    xh = np.zeros((b, h + 2 * padding, w + 2 * padding, c), x.dtype)
    xh[:, padding : padding + h, padding : padding + w, :] = x.transpose(0, 2, 3, 1)
    cols = np.empty((b, ho, wo, kh, kw, c), x.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, :, i, j, :] = xh[:, i : i + stride * ho : stride, j : j + stride * wo : stride, :]
    return cols.reshape(b * ho * wo, kh * kw * c)


def _col2im(cols: np.ndarray, shape, kh: int, kw: int, stride: int, padding: int, ho: int, wo: int) -> np.ndarray:
    """Adjoint of :func:`_im2col`: scatter-add patches back to ``[B, C, H, W]``."""
    b, c, h, w = shape
    cols = cols.reshape(b, ho, wo, kh, kw, c)
    xh = np.zeros((b, h + 2 * padding, w + 2 * padding, c), cols.dtype)
    for i in range(kh):
        for j in range(kw):
            xh[:, i : i + stride * ho : stride, j : j + stride * wo : stride, :] += cols[:, :, :, i, j, :]
    return np.ascontiguousarray(xh[:, padding : padding + h, padding : padding + w, :].transpose(0, 3, 1, 2))


def _weight_matrix(weight: np.ndarray) -> np.ndarray:
    """``[F, C, kh, kw]`` → ``[F, kh·kw·C]`` matching the patch layout."""
    f = weight.shape[0]
    return weight.transpose(0, 2, 3, 1).reshape(f, -1)


def _weight_from_matrix(mat: np.ndarray, shape) -> np.ndarray:
    f, c, kh, kw = shape
    return np.ascontiguousarray(mat.reshape(f, kh, kw, c).transpose(0, 3, 1, 2))


def _to_rows(x: np.ndarray) -> np.ndarray:
    """``[B, C, H, W]`` → ``[B·H·W, C]``."""
    return x.transpose(0, 2, 3, 1).reshape(-1, x.shape[1])


def _from_rows(rows: np.ndarray, b: int, h: int, w: int) -> np.ndarray:
    return np.ascontiguousarray(rows.reshape(b, h, w, -1).transpose(0, 3, 1, 2))


def _correlate(x: np.ndarray, weight: np.ndarray, stride: int, padding: int) -> np.ndarray:
    b, _, h, w = x.shape
    _, _, kh, kw = weight.shape
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (w + 2 * padding - kw) // stride + 1
    cols = _im2col(x, kh, kw, stride, padding, ho, wo)
    return _from_rows(cols @ _weight_matrix(weight).T, b, ho, wo)


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    """2D cross-correlation of ``[B, C, H, W]`` with ``[F, C, kH, kW]`` filters."""
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeError(f"conv2d expects 4D input and weight, got {x.shape} and {weight.shape}")
    b, c, h, w = x.shape
    f, cw, kh, kw = weight.shape
    if c != cw:
        raise ShapeError(f"conv2d: input has {c} channels but weight expects {cw}")
    if bias is not None and bias.shape != (f,):
        raise ShapeError(f"conv2d: bias shape {bias.shape} does not match {f} filters")
    ho = _out_extent(h, kh, stride, padding, "height")
    wo = _out_extent(w, kw, stride, padding, "width")

    cols = _im2col(x.data, kh, kw, stride, padding, ho, wo)
    wmat = _weight_matrix(weight.data)
    rows = cols @ wmat.T
    if bias is not None:
        rows += bias.data
    out = _from_rows(rows, b, ho, wo)
    if not weight.requires_grad:
        cols = None
    # stride-1 input gradient is a full correlation with the flipped, transposed kernel
    flip_ok = stride == 1 and kh == kw and padding <= kh - 1

    def backward(g):
        gx = gw = gb = None
        grows = _to_rows(g) if weight.requires_grad or not flip_ok else None
        if x.requires_grad:
            if flip_ok:
                flipped = weight.data[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
                gx = _correlate(g, flipped, 1, kh - 1 - padding)
            else:
                gx = _col2im(grows @ wmat, x.shape, kh, kw, stride, padding, ho, wo)
        if weight.requires_grad:
            gw = _weight_from_matrix(grows.T @ cols, weight.shape)
        if bias is not None and bias.requires_grad:
            gb = g.sum(axis=(0, 2, 3))
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return make_node(out, parents, backward)


def conv_transpose2d(
    x: Tensor,
    weight: Tensor,
    bias: Tensor | None = None,
    stride: int = 1,
    padding: int = 0,
    output_padding: int = 0,
) -> Tensor:
    """Adjoint of :func:`conv2d` for the same ``[F, C, kH, kW]`` weight.

    ``x`` carries ``F`` channels; the output carries ``C``. Output extent is
    ``(H - 1)·stride - 2·padding + kH + output_padding``; the extra rows and
    columns recover input sizes that :func:`conv2d` floored away.
    """
    if not 0 <= output_padding < max(stride, 1):
        raise ConfigurationError(f"output_padding must lie in [0, stride), got {output_padding}")
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeError(
            f"conv_transpose2d expects 4D input and weight, got {x.shape} and {weight.shape}"
        )
    b, f, h, w = x.shape
    fw, c, kh, kw = weight.shape
    if f != fw:
        raise ShapeError(f"conv_transpose2d: input has {f} channels but weight expects {fw}")
    if bias is not None and bias.shape != (c,):
        raise ShapeError(f"conv_transpose2d: bias shape {bias.shape} does not match {c} outputs")
    ho = (h - 1) * stride - 2 * padding + kh + output_padding
    wo = (w - 1) * stride - 2 * padding + kw + output_padding
    if ho <= 0 or wo <= 0:
        raise ConfigurationError(f"conv_transpose2d: non-positive output extent {ho}x{wo}")

    wmat = _weight_matrix(weight.data)
    xrows = _to_rows(x.data)
    out = _col2im(xrows @ wmat, (b, c, ho, wo), kh, kw, stride, padding, h, w)
    if bias is not None:
        out += bias.data[None, :, None, None]

    def backward(g):
        gx = gw = gb = None
        gcols = _im2col(g, kh, kw, stride, padding, h, w)
        if x.requires_grad:
            gx = _from_rows(gcols @ wmat.T, b, h, w)
        if weight.requires_grad:
            gw = _weight_from_matrix(xrows.T @ gcols, weight.shape)
        if bias is not None and bias.requires_grad:
            gb = g.sum(axis=(0, 2, 3))
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return make_node(out, parents, backward)


def batch_norm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray | None = None,
    running_var: np.ndarray | None = None,
    training: bool = True,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """Per-channel normalization of ``[B, C, H, W]``.

    In training mode the batch statistics are used and the running buffers
    (if given) are updated in place with the unbiased variance.
    """
    b, c, h, w = x.shape
    axes = (0, 2, 3)
    shape = (1, c, 1, 1)
    if training:
        count = b * h * w
        if count < 2:
            raise ShapeError(
                f"batch_norm in training mode needs at least 2 values per channel, got {count}"
            )
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        if running_mean is not None:
            running_mean *= 1.0 - momentum
            running_mean += momentum * mu
        if running_var is not None:
            running_var *= 1.0 - momentum
            running_var += momentum * var * count / (count - 1)
    else:
        if running_mean is None or running_var is None:
            raise ValueError("batch_norm in eval mode needs running statistics")
        mu, var = running_mean, running_var
    inv_std = (1.0 / np.sqrt(var + eps)).astype(x.dtype)
    xhat = (x.data - mu.reshape(shape).astype(x.dtype)) * inv_std.reshape(shape)
    out = xhat * gamma.data.reshape(shape) + beta.data.reshape(shape)

    def backward(g):
        gg = (g * xhat).sum(axis=axes) if gamma.requires_grad else None
        gbeta = g.sum(axis=axes) if beta.requires_grad else None
        gx = None
        if x.requires_grad:
            gxhat = g * gamma.data.reshape(shape)
            if training:
                n = b * h * w
                gx = (
                    inv_std.reshape(shape)
                    / n
                    * (
                        n * gxhat
                        - gxhat.sum(axis=axes, keepdims=True)
                        - xhat * (gxhat * xhat).sum(axis=axes, keepdims=True)
                    )
                )
            else:
                gx = gxhat * inv_std.reshape(shape)
        return gx, gg, gbeta

    return make_node(out, (x, gamma, beta), backward)


def leaky_relu(x: Tensor, slope: float = 0.1) -> Tensor:
    # derivative at exactly 0 is taken as ``slope``; valid for 0 <= slope < 1
    out = np.maximum(x.data, slope * x.data) if slope else np.maximum(x.data, 0)

    def backward(g):
        gx = g * (x.data > 0)
        if slope:
            gx += slope * (g - gx)
        return (gx,)

    return make_node(out, (x,), backward)


def relu(x: Tensor) -> Tensor:
    return leaky_relu(x, 0.0)


def sigmoid(x: Tensor) -> Tensor:
    z = x.data
    e = np.exp(-np.abs(z))
    out = np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(z.dtype)

    def backward(g):
        return (g * out * (1.0 - out),)

    return make_node(out, (x,), backward)


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)

    def backward(g):
        return (g * (1.0 - out * out),)

    return make_node(out, (x,), backward)


def activation(x: Tensor, kind: str, slope: float = 0.1) -> Tensor:
    if kind == "leaky_relu":
        return leaky_relu(x, slope)
    if kind == "sigmoid":
        return sigmoid(x)
    if kind == "tanh":
        return tanh(x)
    if kind == "relu":
        return relu(x)
    if kind in ("identity", "linear", None):
        return x
    raise ConfigurationError(f"unknown activation {kind!r}")


def channelwise_dropout(
    x: Tensor, rate: float, training: bool, rng: np.random.Generator | None = None
) -> Tensor:
    """Zero whole ``(sample, channel)`` maps with probability ``rate``.

    Survivors are rescaled by ``1 / (1 - rate)``. Identity in eval mode.
    """
    if not 0.0 <= rate < 1.0:
        raise ConfigurationError(f"dropout rate must lie in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ValueError("channelwise_dropout in training mode needs an rng stream")
    keep = (rng.random(x.shape[:2]) >= rate).astype(x.dtype) / (1.0 - rate)
    keep = keep.reshape(x.shape[:2] + (1,) * (x.ndim - 2))

    def backward(g):
        return (g * keep,)

    return make_node(x.data * keep, (x,), backward)


def binary_cross_entropy(prob: Tensor, target, eps: float = 1e-7) -> Tensor:
    """Mean BCE of probabilities against constant targets, clamped to ``[eps, 1-eps]``."""
    from . import ops

    target = as_tensor(target, prob)
    p = ops.clip(prob, eps, 1.0 - eps)
    loss = -(target * ops.log(p) + (1.0 - target) * ops.log(1.0 - p))
    return ops.mean(loss)
