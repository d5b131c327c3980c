"""Optimizers: Adam (compressor training) and plain SGD (client updates)."""

from __future__ import annotations

import numpy as np

from .errors import DivergenceError, ShapeError


class Adam:
    """Standard Adam with bias correction.

    Moment tensors shape-match the parameters; `t` advances by exactly one
    per step. Parameters are updated in place. Non-finite gradients raise
    rather than being clamped, naming the offending tensor.
    """

    def __init__(self, params: list[np.ndarray], lr: float = 2e-4, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8,
                 param_names: list[str] | None = None):
        self.params = params
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.param_names = param_names

    def step(self, grads: list[np.ndarray]) -> None:
        if len(grads) != len(self.params):
            raise ShapeError(f"adam: {len(grads)} gradients for {len(self.params)} parameters")
        for i, (p, g) in enumerate(zip(self.params, grads)):
            if g.shape != p.shape:
                raise ShapeError(f"adam: gradient {i} shape {g.shape} != parameter shape {p.shape}")
            if not np.all(np.isfinite(g)):
                name = self.param_names[i] if self.param_names else f"parameter {i}"
                raise DivergenceError(f"non-finite gradient in {name} at step {self.t + 1}")
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            mhat = m / b1t
            vhat = v / b2t
            p -= (self.lr * mhat / (np.sqrt(vhat) + self.eps)).astype(p.dtype, copy=False)


def sgd_step(params: list[np.ndarray], grads: list[np.ndarray], lr: float) -> None:
    """In-place plain SGD update used by simulated clients."""
    for i, (p, g) in enumerate(zip(params, grads)):
        if not np.all(np.isfinite(g)):
            raise DivergenceError(f"non-finite gradient in parameter {i}")
        p -= (lr * g).astype(p.dtype, copy=False)
