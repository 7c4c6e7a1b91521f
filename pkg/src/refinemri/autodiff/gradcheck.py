"""Finite-difference gradient checking along random directions."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, no_grad


def directional_check(
    fn: Callable[[], Tensor],
    leaves: Sequence[Tensor],
    rng: np.random.Generator,
    h: float = 1e-6,
) -> float:
    """Relative error between the autodiff and central-difference directional derivative.

    ``fn`` must rebuild a scalar from the current ``leaves`` data on every
    call and be deterministic. All leaves are perturbed together along one
    random unit direction.
    """
    for t in leaves:
        t.grad = None
        t.requires_grad = True
    out = fn()
    out.backward()
    dirs = [rng.standard_normal(t.data.shape) for t in leaves]
    norm = np.sqrt(sum(float(np.sum(d * d)) for d in dirs))
    dirs = [d / norm for d in dirs]
    analytic = sum(float(np.sum((t.grad if t.grad is not None else 0.0) * d)) for t, d in zip(leaves, dirs))
    base = [t.data.copy() for t in leaves]
    values = []
    for sign in (1.0, -1.0):
        for t, b, d in zip(leaves, base, dirs):
            t.data = (b + sign * h * d).astype(b.dtype)
        with no_grad():
            values.append(float(fn().data))
    for t, b in zip(leaves, base):
        t.data = b
    numeric = (values[0] - values[1]) / (2 * h)
    scale = max(abs(analytic), abs(numeric), 1e-8)
    return abs(analytic - numeric) / scale
