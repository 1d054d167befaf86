"""Numerical gradient verification by central finite differences."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, backward


def grad_check(fn, inputs, eps=1e-4):
    """Compare analytic gradients of ``fn(*inputs)`` against central
    differences.

    `fn` must return a scalar tensor.  `inputs` are the tensors to perturb;
    each is checked in every element.  Returns the max relative error
    |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).

    Run this in float64: float32 rounding dominates the difference quotient.
    """
    inputs = list(inputs)
    for t in inputs:
        t.requires_grad = True
        t.zero_grad()
    loss = fn(*inputs)
    if loss.size != 1:
        raise ValueError(f"grad_check needs a scalar objective, got shape {loss.shape}")
    backward(loss)

    worst = 0.0
    for t in inputs:
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        num = np.zeros_like(flat)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = float(fn(*inputs).data)
            flat[i] = orig - eps
            lo = float(fn(*inputs).data)
            flat[i] = orig
            num[i] = (hi - lo) / (2.0 * eps)
        a = analytic.reshape(-1)
        denom = np.maximum(np.maximum(np.abs(a), np.abs(num)), 1e-8)
        err = float(np.max(np.abs(a - num) / denom)) if flat.size else 0.0
        worst = max(worst, err)
    return worst


def make_inputs(rng, *shapes, dtype=np.float64, scale=1.0):
    """Random float64 leaf tensors for gradient checking."""
    return [Tensor(rng.standard_normal(s) * scale, requires_grad=True, dtype=dtype)
            for s in shapes]
