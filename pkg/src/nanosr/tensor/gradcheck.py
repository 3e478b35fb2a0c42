"""Central finite-difference checks for the kernel VJPs, run in float64."""
from __future__ import annotations

import numpy as np

from .autograd import Tape
from .kernels import KERNELS


def numeric_grad(f, x: np.ndarray, step: float = 1e-3) -> np.ndarray:
    """Central differences of scalar ``f`` wrt every element of ``x``."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        hi = f(x)
        flat[i] = orig - step
        lo = f(x)
        flat[i] = orig
        gflat[i] = (hi - lo) / (2 * step)
    return g


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    denom = max(np.linalg.norm(a), np.linalg.norm(b))
    if denom == 0.0:
        return 0.0
    return float(np.linalg.norm(a - b) / denom)


def check_op(op: str, inputs, attrs=None, wrt=None, step: float = 1e-3, seed: int = 0) -> dict[int, float]:
    """Compare tape gradients of ``sum(proj * op(*inputs))`` with finite differences.

    Returns {input index: relative error}. ``wrt`` selects the inputs to check
    (default: all). Everything is promoted to float64 first.
    """
    attrs = dict(attrs or {})
    inputs = [np.array(x, dtype=np.float64) for x in inputs]
    wrt = range(len(inputs)) if wrt is None else wrt
    kernel = KERNELS[op]
    out0, _ = kernel.forward(*inputs, **attrs)
    proj = np.random.default_rng(seed).standard_normal(out0.shape)

    tape = Tape()
    leaves = [tape.leaf(x, requires_grad=(i in wrt)) for i, x in enumerate(inputs)]
    out = tape.apply(op, *leaves, **attrs)
    grads = tape.backward(out, proj)

    errors = {}
    for i in wrt:
        def f(xi, i=i):
            args = list(inputs)
            args[i] = xi
            return float((kernel.forward(*args, **attrs)[0] * proj).sum())

        num = numeric_grad(f, inputs[i], step)
        ana = grads.get(leaves[i], np.zeros_like(inputs[i]))
        errors[i] = relative_error(ana, num)
    return errors
