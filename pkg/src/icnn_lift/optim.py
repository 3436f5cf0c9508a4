"""Bias-corrected Adam over a dict of named arrays."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def copy(self):
        return AdamState(
            self.lr, self.beta1, self.beta2, self.eps, self.step,
            {k: a.copy() for k, a in self.m.items()},
            {k: a.copy() for k, a in self.v.items()},
        )


def adam_step(state: AdamState, params: dict, grads: dict, names=None):
    """Update ``params`` in place from ``grads``; returns the applied updates."""
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    updates = {}
    for k in names if names is not None else grads:
        g = grads[k]
        if k not in state.m:
            state.m[k] = np.zeros_like(params[k])
            state.v[k] = np.zeros_like(params[k])
        m = state.m[k]
        v = state.v[k]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        upd = -state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        params[k] = params[k] + upd
        updates[k] = upd
    return updates
