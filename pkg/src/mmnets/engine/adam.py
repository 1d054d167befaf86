"""Adam optimizer with bias correction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    """First/second moment buffers mirroring a fixed parameter list."""

    lr: float = 2e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params, lr=2e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        state = cls(lr=lr, beta1=beta1, beta2=beta2, eps=eps)
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
        return state


def adam_step(params, grads, state: AdamState):
    """One Adam update over aligned (params, grads); mutates params in place.

    `grads` may be None to use each parameter's accumulated ``.grad``
    (missing gradients count as zero).
    """
    if grads is None:
        grads = [p.grad for p in params]
    if len(grads) != len(params) or len(state.m) != len(params):
        raise ValueError("adam_step: params/grads/state lengths disagree")
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g is None:
            continue
        if g.shape != p.data.shape:
            raise ValueError(f"adam_step: grad shape {g.shape} != param shape {p.data.shape}")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        mhat = m / bc1
        vhat = v / bc2
        p.data -= (state.lr * mhat / (np.sqrt(vhat) + state.eps)).astype(p.data.dtype)
    return params, state
