"""Finite-difference gradient oracle.

Compares tape gradients against central differences at randomly sampled
coordinates.  The deviation metric is ``|a - n| / max(|a|, |n|, 1)``: relative
for large gradients, absolute for small ones, so the check stays meaningful
for near-zero entries under 32-bit rounding.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .tensor import ShapeError, Tape, Tensor, backward


@dataclass
class GradCheckReport:
    max_deviation: float
    tolerance: float
    per_input: list = field(default_factory=list)
    checked_points: int = 0

    @property
    def passed(self) -> bool:
        return self.max_deviation < self.tolerance

    def __str__(self) -> str:
        status = "pass" if self.passed else "FAIL"
        return f"{status}: max deviation {self.max_deviation:.3e} (tolerance {self.tolerance:.1e}, {self.checked_points} points)"


def grad_check(
    op_closure: Callable[..., Tensor],
    inputs: Sequence[Tensor],
    tolerance: float = 1e-3,
    h: float = 1e-3,
    n_samples: int = 100,
    rng: np.random.Generator | None = None,
) -> GradCheckReport:
    """Check analytic gradients of a scalar-valued closure.

    ``op_closure(*inputs)`` must return a scalar Tensor.  Up to ``n_samples``
    coordinates, spread over all inputs, are perturbed by +-``h`` for the
    central-difference estimate.  Inputs with more elements than their sample
    share are probed at random coordinates.
    """
    rng = rng or np.random.default_rng(0)
    for t in inputs:
        t.requires_grad = True
        t.zero_grad()

    with Tape() as tape:
        out = op_closure(*inputs)
    if out.size != 1:
        raise ShapeError(f"grad_check closure must return a scalar, got shape {out.shape}")
    backward(out, tape)
    analytic = [np.array(t.grad, copy=True) for t in inputs]
    for t in inputs:
        t.zero_grad()

    total = sum(t.size for t in inputs)
    max_dev = 0.0
    checked = 0
    per_input = []
    for t, a in zip(inputs, analytic):
        share = max(1, round(n_samples * t.size / total))
        if t.size <= share:
            coords = np.arange(t.size)
        else:
            coords = rng.choice(t.size, size=share, replace=False)
        flat = t.data.reshape(-1)
        dev_t = 0.0
        for idx in coords:
            orig = flat[idx]
            flat[idx] = orig + h
            f_plus = float(op_closure(*inputs).data)
            flat[idx] = orig - h
            f_minus = float(op_closure(*inputs).data)
            flat[idx] = orig
            numeric = (f_plus - f_minus) / (2.0 * h)
            av = float(a.reshape(-1)[idx])
            dev = abs(av - numeric) / max(abs(av), abs(numeric), 1.0)
            dev_t = max(dev_t, dev)
            checked += 1
        per_input.append(dev_t)
        max_dev = max(max_dev, dev_t)

    return GradCheckReport(max_deviation=max_dev, tolerance=tolerance, per_input=per_input, checked_points=checked)
