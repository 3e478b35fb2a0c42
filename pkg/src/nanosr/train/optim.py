"""Adam with bias correction."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class OptimizerState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0

    @classmethod
    def zeros_like(cls, params) -> "OptimizerState":
        return cls(
            {k: np.zeros_like(p) for k, p in params.items()},
            {k: np.zeros_like(p) for k, p in params.items()},
            0,
        )


def adam_step(params, grads, state: OptimizerState, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """One update; returns (new params, new state). Inputs are not modified.

    Parameters missing from ``grads`` are treated as having zero gradient.
    """
    if lr <= 0:
        raise ValueError("learning rate must be positive")
    t = state.t + 1
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    new_p, new_m, new_v = {}, {}, {}
    for k, p in params.items():
        p = np.asarray(p)
        g = grads.get(k)
        g = np.zeros_like(p) if g is None else np.asarray(g, dtype=p.dtype)
        if g.shape != p.shape:
            raise ValueError(f"{k}: gradient {g.shape} does not match parameter {p.shape}")
        m = state.m.get(k, np.zeros_like(p))
        v = state.v.get(k, np.zeros_like(p))
        m = (beta1 * m + (1 - beta1) * g).astype(p.dtype)
        v = (beta2 * v + (1 - beta2) * g * g).astype(p.dtype)
        step = lr * (m / c1) / (np.sqrt(v / c2) + eps)
        new_p[k] = (p - step).astype(p.dtype)
        new_m[k], new_v[k] = m, v
    return new_p, OptimizerState(new_m, new_v, t)
