"""Adam optimizer with bias correction, plus global gradient-norm clipping."""

from __future__ import annotations

import math
from typing import Dict, Iterable

import numpy as np

from .tensor import Tensor


class Adam:
    """Standard bias-corrected adaptive update over a named parameter map.

    Defaults (lr 1e-4, betas 0.9/0.999, eps 1e-8) are the ones the training
    loop uses.  Zero gradients leave parameters untouched on the first step.
    """

    def __init__(self, params: Dict[str, Tensor], lr: float = 1e-4,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = {name: p for name, p in params.items() if p.requires_grad}
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = {name: np.zeros_like(p.data) for name, p in self.params.items()}
        self.v = {name: np.zeros_like(p.data) for name, p in self.params.items()}

    def step(self) -> None:
        self.step_count += 1
        bc1 = 1.0 - self.beta1 ** self.step_count
        bc2 = 1.0 - self.beta2 ** self.step_count
        for name, p in self.params.items():
            g = p.grad
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            update = (self.lr / bc1) * m / (np.sqrt(v / bc2) + self.eps)
            p.data -= update.astype(p.dtype, copy=False)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()


def adam_step(optimizer: Adam) -> None:
    """Apply one update from the gradients currently held by the parameters."""
    optimizer.step()


def clip_grad_norm(params: Iterable[Tensor], max_norm: float) -> float:
    """Scale all gradients so their joint L2 norm is at most ``max_norm``."""
    params = [p for p in params if p.requires_grad]
    total = math.sqrt(sum(float(np.sum(np.square(p.grad, dtype=np.float64))) for p in params))
    if total > max_norm and total > 0.0:
        factor = max_norm / total
        for p in params:
            p._grad *= factor
    return total
