"""Weight initialisation and the 2x -> 4x weight-repetition warm start."""
from __future__ import annotations

import numpy as np

from ..tensor import ConvParams, ShapeError
from .graph import ModelGraph, param_count

# Golden-ratio conjugate; drives the fixed-for-test counter sequence.
_WEYL = 0.6180339887498949
SCHEMES = ("uniform-fan-in", "fixed-for-test")


def fixed_sequence(start: int, count: int) -> np.ndarray:
    """Elements ``start .. start+count-1`` of 2*frac((k+1)*phi) - 1, in float64."""
    k = np.arange(start + 1, start + count + 1, dtype=np.float64)
    return 2.0 * np.mod(k * _WEYL, 1.0) - 1.0


def init_weights(g: ModelGraph, scheme: str = "uniform-fan-in", seed: int = 0) -> ModelGraph:
    """Return ``g`` with freshly initialised parameters.

    uniform-fan-in: every tensor drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in))
    with a numpy PCG64 generator seeded by ``seed``, in parameter declaration
    order; PReLU slopes start at 0.25.

    fixed-for-test: element k of the whole parameter stream (declaration
    order, row-major inside each tensor, k counted from 0) is
    (2*frac((k+1)*0.6180339887498949) - 1) / sqrt(fan_in), rounded to float32.
    The seed is ignored, so any implementation can rebuild the same weights.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown init scheme {scheme!r}")
    rng = np.random.default_rng(seed)
    params = {}
    counter = 0
    for name, value in g.params.items():
        shape = np.shape(value)
        bound = 1.0 / np.sqrt(g.fan_in.get(name, 1))
        if scheme == "fixed-for-test":
            n = int(np.prod(shape))
            params[name] = (fixed_sequence(counter, n) * bound).reshape(shape).astype(np.float32)
            counter += n
        elif name.endswith(".slope"):
            params[name] = np.full(shape, 0.25, np.float32)
        else:
            params[name] = rng.uniform(-bound, bound, size=shape).astype(np.float32)
    return g.with_params(params)


def repeat_index(r_from: int = 2, r_to: int = 4, colors: int = 3) -> np.ndarray:
    """Source channel for every target channel of the widened shuffle feed.

    Target (c, I, J) of the r_to shuffle reads source (c, I*r_from//r_to, J*r_from//r_to),
    so each r_from x r_from subpixel is duplicated into a block.
    """
    f = r_to // r_from
    idx = np.empty(colors * r_to * r_to, dtype=np.int64)
    for c in range(colors):
        for i in range(r_to):
            for j in range(r_to):
                idx[c * r_to * r_to + i * r_to + j] = c * r_from * r_from + (i // f) * r_from + j // f
    return idx


def repeat_weights_2x_to_4x(w2: ConvParams) -> ConvParams:
    """Widen a 12-channel 2x shuffle feed conv to the 48-channel 4x one."""
    if w2.weight.shape[0] != 12:
        raise ShapeError(f"source conv must have 12 output channels, got {w2.weight.shape[0]}")
    idx = repeat_index()
    bias = None if w2.bias is None else np.asarray(w2.bias)[idx].copy()
    return ConvParams(
        np.asarray(w2.weight)[idx].copy(), bias, w2.stride, w2.padding, w2.groups
    )


def transfer_2x_to_4x(g2: ModelGraph, g4: ModelGraph, last: str = "conv4") -> ModelGraph:
    """Copy every 2x parameter into the 4x graph, widening the last conv."""
    params = dict(g4.params)
    for name, value in g2.params.items():
        if not name.startswith(f"{last}."):
            params[name] = value
    p = repeat_weights_2x_to_4x(
        ConvParams(g2.params[f"{last}.weight"], g2.params[f"{last}.bias"], padding=1)
    )
    params[f"{last}.weight"] = p.weight
    params[f"{last}.bias"] = p.bias
    return g4.with_params(params)


def describe(g: ModelGraph) -> dict:
    from ..io import weights_to_bytes

    return {"param_count": param_count(g), "model_bytes": len(weights_to_bytes(g.params))}
