"""Finite-difference verification of analytic gradients.

Run in double precision: compute the analytic gradient once via backward,
then perturb every parameter coordinate by +-step and compare against the
central difference of the scalar loss.
"""

from __future__ import annotations

import math

import numpy as np

from .autograd import Tensor
from .errors import NumericError


def _loss_value(loss_fn) -> float:
    out = loss_fn()
    val = float(out.data if isinstance(out, Tensor) else out)
    if not math.isfinite(val):
        raise NumericError(f"loss is non-finite: {val}")
    return val


def grad_check(loss_fn, param_tensors: list[Tensor], step: float = 1e-5) -> float:
    """Return the worst relative error between analytic and numeric gradients.

    `loss_fn` takes no arguments and recomputes the scalar loss from the
    current values of `param_tensors`.
    """
    for p in param_tensors:
        p.zero_grad()
    out = loss_fn()
    if not math.isfinite(float(out.data)):
        raise NumericError("loss is non-finite at the evaluation point")
    out.backward()
    analytic = [
        p.grad.copy() if p.grad is not None else np.zeros_like(p.data)
        for p in param_tensors
    ]

    worst = 0.0
    for p, a in zip(param_tensors, analytic):
        flat = p.data.reshape(-1)
        a_flat = a.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            plus = _loss_value(loss_fn)
            flat[i] = orig - step
            minus = _loss_value(loss_fn)
            flat[i] = orig
            numeric = (plus - minus) / (2.0 * step)
            denom = max(abs(a_flat[i]) + abs(numeric), 1e-4)
            worst = max(worst, abs(a_flat[i] - numeric) / denom)
        p.zero_grad()
    return worst
