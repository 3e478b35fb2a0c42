"""NCHW tensors as plain numpy arrays, plus the ops every zoo model needs.

The functions here are the eager, side-effect free entry points. Training code
goes through :class:`Tape` instead, which calls the same kernels.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .autograd import Tape, TapeError, Var
from .kernels import KERNELS, ShapeError, as_tensor

__all__ = [
    "ConvParams",
    "KERNELS",
    "ShapeError",
    "Tape",
    "TapeError",
    "Var",
    "activation",
    "as_tensor",
    "backward",
    "bilinear_resize",
    "concat_channels",
    "conv2d",
    "elementwise",
    "pixel_shuffle",
    "transposed_conv2d",
]


@dataclass(frozen=True)
class ConvParams:
    """Weights (c_out, c_in/groups, k, k), optional bias (c_out,), geometry."""

    weight: np.ndarray
    bias: np.ndarray | None = None
    stride: int = 1
    padding: int = 0
    groups: int = 1

    def __post_init__(self):
        w = np.asarray(self.weight)
        if w.ndim != 4:
            raise ShapeError(f"conv weights must be rank 4, got {w.shape}")
        if self.stride < 1 or self.padding < 0 or self.groups < 1:
            raise ShapeError("stride and groups must be positive, padding non-negative")
        if w.shape[0] % self.groups:
            raise ShapeError(f"c_out={w.shape[0]} not divisible by groups={self.groups}")
        if self.bias is not None and np.shape(self.bias) != (w.shape[0],):
            raise ShapeError(f"bias length {np.shape(self.bias)} != c_out {w.shape[0]}")

    @property
    def kernel_size(self) -> int:
        return self.weight.shape[2]

    @property
    def c_out(self) -> int:
        return self.weight.shape[0]

    @property
    def c_in(self) -> int:
        return self.weight.shape[1] * self.groups


def conv2d(x, p: ConvParams) -> np.ndarray:
    x = as_tensor(x)
    w = np.asarray(p.weight, dtype=x.dtype)
    b = None if p.bias is None else np.asarray(p.bias, dtype=x.dtype)
    return kernels.conv2d(x, w, b, stride=p.stride, padding=p.padding, groups=p.groups)[0]


def transposed_conv2d(x, p: ConvParams) -> np.ndarray:
    if p.groups != 1:
        raise ShapeError("grouped transposed convolution is not supported")
    x = as_tensor(x)
    w = np.asarray(p.weight, dtype=x.dtype)
    b = None if p.bias is None else np.asarray(p.bias, dtype=x.dtype)
    return kernels.transposed_conv2d(x, w, b, stride=p.stride, padding=p.padding)[0]


def activation(x, kind: str, param=None) -> np.ndarray:
    """``kind`` is relu, leaky_relu (``param`` = alpha) or prelu (``param`` = per-channel slopes)."""
    x = as_tensor(x)
    if kind == "relu":
        return kernels.relu(x)[0]
    if kind == "leaky_relu":
        return kernels.leaky_relu(x, alpha=float(param))[0]
    if kind == "prelu":
        return kernels.prelu(x, np.asarray(param, dtype=x.dtype).reshape(-1))[0]
    raise ValueError(f"unknown activation {kind!r}")


def pixel_shuffle(x, r: int, inverse: bool = False) -> np.ndarray:
    return kernels.pixel_shuffle(as_tensor(x), r=r, inverse=inverse)[0]


def bilinear_resize(x, scale: int) -> np.ndarray:
    return kernels.bilinear_resize(as_tensor(x), scale=scale)[0]


def concat_channels(inputs) -> np.ndarray:
    return kernels.concat(*[as_tensor(t) for t in inputs])[0]


def elementwise(a, b_or_bounds, kind: str) -> np.ndarray:
    a = as_tensor(a)
    if kind == "add":
        return kernels.add(a, as_tensor(b_or_bounds, a.dtype))[0]
    if kind == "clip":
        lo, hi = b_or_bounds
        return kernels.clip(a, lo=lo, hi=hi)[0]
    raise ValueError(f"unknown elementwise kind {kind!r}")


def backward(tape: Tape, output: Var, loss_grad=None) -> dict[Var, np.ndarray]:
    """Reverse-mode accumulation from ``output``; see :meth:`Tape.backward`."""
    return tape.backward(output, loss_grad)
