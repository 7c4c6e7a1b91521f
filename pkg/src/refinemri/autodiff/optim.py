"""Adam optimizer and parameter initializers."""

from __future__ import annotations

from typing import Iterable

import numpy as np

from .module import Parameter


class Adam:
    """Bias-corrected Adam. Moments live on the parameters themselves."""

    def __init__(
        self,
        params: Iterable[Parameter],
        lr: float = 2e-4,
        beta1: float = 0.5,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        missing = [p.name or repr(p) for p in self.params if p.grad is None]
        if missing:
            raise RuntimeError(f"adam_step: no gradient for parameter(s) {', '.join(missing)}")
        for p in self.params:
            adam_update(p, self.lr, self.beta1, self.beta2, self.eps)
            p.grad = None


def adam_update(p: Parameter, lr: float, beta1: float, beta2: float, eps: float) -> None:
    g = p.grad.astype(p.dtype, copy=False)
    p.step_count += 1
    t = p.step_count
    p.adam_m = beta1 * p.adam_m + (1.0 - beta1) * g
    p.adam_v = beta2 * p.adam_v + (1.0 - beta2) * g * g
    m_hat = p.adam_m / (1.0 - beta1**t)
    v_hat = p.adam_v / (1.0 - beta2**t)
    p.data = (p.data - lr * m_hat / (np.sqrt(v_hat) + eps)).astype(p.dtype, copy=False)


def init_orthogonal(p: Parameter, rng: np.random.Generator, gain: float = 1.0) -> None:
    """Orthogonal init of ``p`` viewed as a ``(shape[0], prod(shape[1:]))`` matrix.

    The smaller of the two dimensions ends up orthonormal.
    """
    rows = p.shape[0]
    cols = int(np.prod(p.shape[1:])) if p.ndim > 1 else 1
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q *= np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    p.data = (gain * q).reshape(p.shape).astype(p.dtype)


def init_gaussian(p: Parameter, rng: np.random.Generator, mean: float = 0.0, std: float = 0.02) -> None:
    p.data = rng.normal(mean, std, size=p.shape).astype(p.dtype)


def init_zeros(p: Parameter) -> None:
    p.data = np.zeros(p.shape, dtype=p.dtype)


def init_scalar(p: Parameter, value: float) -> None:
    p.data = np.full(p.shape, value, dtype=p.dtype)


def initialize(p: Parameter, scheme: str, rng: np.random.Generator | None = None, **kwargs) -> None:
    """Dispatch by scheme name: ``orthogonal``, ``gaussian``, ``zeros``, ``scalar``."""
    if scheme == "orthogonal":
        init_orthogonal(p, rng, **kwargs)
    elif scheme == "gaussian":
        init_gaussian(p, rng, **kwargs)
    elif scheme == "zeros":
        init_zeros(p)
    elif scheme == "scalar":
        init_scalar(p, kwargs.get("value", 0.0))
    else:
        raise ValueError(f"unknown init scheme {scheme!r}")
