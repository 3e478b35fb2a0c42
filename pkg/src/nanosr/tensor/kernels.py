"""NCHW forward kernels and their vector-Jacobian products.

Every kernel is a pair ``forward(*arrays, **attrs) -> (out, ctx)`` and
``backward(ctx, grad_out, needs) -> tuple of input grads``. Kernels never
mutate their inputs and preserve the floating dtype they are given, so the
same code runs in float32 for training and in float64 for gradient checks.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class ShapeError(ValueError):
    """Raised when operand dimensions violate an op's preconditions."""


@dataclass(frozen=True)
class Kernel:
    name: str
    forward: Callable
    backward: Callable | None  # None for non-differentiable ops


KERNELS: dict[str, Kernel] = {}


def _register(name, backward=None):
    def deco(fn):
        KERNELS[name] = Kernel(name, fn, backward)
        return fn

    return deco


def as_tensor(x, dtype=None) -> np.ndarray:
    """Coerce to a rank-4 floating array (float32 unless ``dtype`` given)."""
    arr = np.asarray(x)
    if arr.ndim != 4:
        raise ShapeError(f"expected rank-4 NCHW tensor, got shape {arr.shape}")
    if dtype is None:
        dtype = arr.dtype if arr.dtype in (np.float32, np.float64) else np.float32
    return np.ascontiguousarray(arr, dtype=dtype)


def conv_out_size(size: int, k: int, stride: int, pad: int) -> int:
    span = size + 2 * pad - k
    if span < 0 or span % stride:
        raise ShapeError(
            f"non-integer conv output: size={size} k={k} stride={stride} pad={pad}"
        )
    return span // stride + 1


def _pad_hw(x, pad):
    if not pad:
        return x
    return np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))


def _col2im(cols, shape, stride):
    """Scatter-add ``cols`` of shape (n, c, ho, wo, kh, kw) into ``shape``."""
    n, c, ho, wo, kh, kw = cols.shape
    out = np.zeros(shape, dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += cols[
                :, :, :, :, i, j
            ]
    return out


# ---------------------------------------------------------------- convolution


def _conv2d_backward(ctx, g, needs):
    win, w, has_bias, stride, pad, groups, xshape, xpshape = ctx
    n, co, ho, wo = g.shape
    _, cpg, kh, kw = w.shape
    gx = gw = gb = None
    if groups == 1:
        if needs[1]:
            gw = np.tensordot(g, win, axes=([0, 2, 3], [0, 2, 3]))
        if needs[0]:
            cols = np.tensordot(g, w, axes=([1], [0])).transpose(0, 3, 1, 2, 4, 5)
            gxp = _col2im(cols, xpshape, stride)
    else:
        gg = g.reshape(n, groups, co // groups, ho, wo)
        wing = win.reshape(n, groups, cpg, ho, wo, kh, kw)
        if needs[1]:
            gw = np.einsum("ngohw,ngchwij->gocij", gg, wing).reshape(w.shape)
        if needs[0]:
            wg = w.reshape(groups, co // groups, cpg, kh, kw)
            cols = np.einsum("ngohw,gocij->ngchwij", gg, wg).reshape(
                n, groups * cpg, ho, wo, kh, kw
            )
            gxp = _col2im(cols, xpshape, stride)
    if needs[0]:
        h, wd = xshape[2], xshape[3]
        gx = np.ascontiguousarray(gxp[:, :, pad : pad + h, pad : pad + wd])
    if has_bias and len(needs) > 2 and needs[2]:
        gb = g.sum(axis=(0, 2, 3))
    if gw is not None:
        gw = gw.astype(w.dtype, copy=False)
    return (gx, gw, gb) if has_bias else (gx, gw)


def _distinct_filters(w):
    """Identical output filters are computed once and gathered.

    Returns (unique filters in first-occurrence order, row map or None).
    Widened copies of a conv therefore run the same GEMM as the original and
    give bit-identical channels.
    """
    co = w.shape[0]
    if co < 2:
        return w, None
    _, first, inverse = np.unique(w.reshape(co, -1), axis=0, return_index=True, return_inverse=True)
    if len(first) == co:
        return w, None
    order = np.argsort(first)
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    return w[np.sort(first)], rank[np.ravel(inverse)]


@_register("conv2d", _conv2d_backward)
def conv2d(x, w, b=None, *, stride=1, padding=0, groups=1):
    n, c, h, wd = x.shape
    co, cpg, kh, kw = w.shape
    if groups < 1 or c != cpg * groups or co % groups:
        raise ShapeError(
            f"channel mismatch: input has {c} channels, weights {w.shape} with groups={groups}"
        )
    if stride < 1 or padding < 0:
        raise ShapeError(f"invalid stride={stride} / padding={padding}")
    if b is not None and b.shape != (co,):
        raise ShapeError(f"bias shape {b.shape} does not match {co} output channels")
    ho = conv_out_size(h, kh, stride, padding)
    wo = conv_out_size(wd, kw, stride, padding)
    xp = _pad_hw(x, padding)
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    if groups == 1:
        uniq, rows = _distinct_filters(w)
        out = np.tensordot(win, uniq, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
        if rows is not None:
            out = out[:, rows]
    else:
        wing = win.reshape(n, groups, cpg, ho, wo, kh, kw)
        wg = w.reshape(groups, co // groups, cpg, kh, kw)
        out = np.einsum("ngchwij,gocij->ngohw", wing, wg).reshape(n, co, ho, wo)
    if b is not None:
        out = out + b.reshape(1, -1, 1, 1)
    out = np.ascontiguousarray(out, dtype=x.dtype)
    ctx = (win, w, b is not None, stride, padding, groups, x.shape, xp.shape)
    return out, ctx


def _tconv_backward(ctx, g, needs):
    x, w, has_bias, stride, pad = ctx
    k = w.shape[2]
    gfull = _pad_hw(g, pad)
    gwin = sliding_window_view(gfull, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    gx = gw = gb = None
    if needs[0]:
        gx = np.ascontiguousarray(
            np.tensordot(gwin, w, axes=([1, 4, 5], [0, 2, 3])).transpose(0, 3, 1, 2)
        )
    if needs[1]:
        gw = np.tensordot(gwin, x, axes=([0, 2, 3], [0, 2, 3])).transpose(0, 3, 1, 2)
        gw = np.ascontiguousarray(gw, dtype=w.dtype)
    if has_bias and len(needs) > 2 and needs[2]:
        gb = g.sum(axis=(0, 2, 3))
    return (gx, gw, gb) if has_bias else (gx, gw)


@_register("transposed_conv2d", _tconv_backward)
def transposed_conv2d(x, w, b=None, *, stride=1, padding=0):
    """Weights are (c_out, c_in, k, k); output side is (h-1)*stride + k - 2*padding."""
    n, c, h, wd = x.shape
    co, ci, kh, kw = w.shape
    if ci != c:
        raise ShapeError(f"channel mismatch: input has {c} channels, weights {w.shape}")
    if stride < 1:
        raise ShapeError("stride must be >= 1")
    if kh != kw:
        raise ShapeError("transposed conv needs a square kernel")
    full_h = (h - 1) * stride + kh
    full_w = (wd - 1) * stride + kw
    if full_h - 2 * padding < 0 or full_w - 2 * padding < 0:
        raise ShapeError("padding larger than output")
    cols = np.tensordot(x, w, axes=([1], [1])).transpose(0, 3, 1, 2, 4, 5)
    out = _col2im(cols, (n, co, full_h, full_w), stride)
    out = out[:, :, padding : full_h - padding, padding : full_w - padding]
    if b is not None:
        out = out + b.reshape(1, -1, 1, 1)
    out = np.ascontiguousarray(out, dtype=x.dtype)
    return out, (x, w, b is not None, stride, padding)


# ---------------------------------------------------------------- activations


@_register("relu", lambda ctx, g, needs: (g * (ctx > 0),))
def relu(x):
    return np.maximum(x, 0), x


@_register(
    "leaky_relu",
    lambda ctx, g, needs: (g * np.where(ctx[0] > 0, 1.0, ctx[1]).astype(g.dtype),),
)
def leaky_relu(x, *, alpha):
    out = np.maximum(x, 0) + alpha * np.minimum(x, 0)
    return out.astype(x.dtype, copy=False), (x, alpha)


def _prelu_backward(ctx, g, needs):
    x, a = ctx
    slope = np.where(x > 0, 1, a.reshape(1, -1, 1, 1)).astype(g.dtype)
    ga = (g * np.minimum(x, 0)).sum(axis=(0, 2, 3)) if needs[1] else None
    return g * slope if needs[0] else None, ga


@_register("prelu", _prelu_backward)
def prelu(x, a):
    if a.shape != (x.shape[1],):
        raise ShapeError(f"prelu slopes {a.shape} do not match {x.shape[1]} channels")
    out = np.maximum(x, 0) + a.reshape(1, -1, 1, 1) * np.minimum(x, 0)
    return out.astype(x.dtype, copy=False), (x, a)


# ---------------------------------------------------------------- layout ops


def _shuffle(x, r):
    n, c, h, w = x.shape
    if c % (r * r):
        raise ShapeError(f"pixel_shuffle: {c} channels not divisible by r^2={r * r}")
    co = c // (r * r)
    y = x.reshape(n, co, r, r, h, w).transpose(0, 1, 4, 2, 5, 3)
    return np.ascontiguousarray(y.reshape(n, co, h * r, w * r))


def _unshuffle(x, r):
    n, c, h, w = x.shape
    if h % r or w % r:
        raise ShapeError(f"inverse pixel_shuffle: {h}x{w} not divisible by r={r}")
    y = x.reshape(n, c, h // r, r, w // r, r).transpose(0, 1, 3, 5, 2, 4)
    return np.ascontiguousarray(y.reshape(n, c * r * r, h // r, w // r))


@_register(
    "pixel_shuffle",
    lambda ctx, g, needs: ((_shuffle(g, ctx[0]) if ctx[1] else _unshuffle(g, ctx[0])),),
)
def pixel_shuffle(x, *, r, inverse=False):
    if r < 1:
        raise ShapeError("shuffle factor must be positive")
    return (_unshuffle(x, r) if inverse else _shuffle(x, r)), (r, inverse)


def bilinear_matrix(n_in: int, scale: int, dtype=np.float64) -> np.ndarray:
    """Half-pixel (align_corners=False) linear interpolation matrix."""
    n_out = n_in * scale
    m = np.zeros((n_out, n_in), dtype=np.float64)
    for o in range(n_out):
        src = max((o + 0.5) / scale - 0.5, 0.0)
        i0 = min(int(math.floor(src)), n_in - 1)
        i1 = min(i0 + 1, n_in - 1)
        lam = src - i0
        m[o, i0] += 1.0 - lam
        m[o, i1] += lam
    return m.astype(dtype)


def _resample_backward(ctx, g, needs):
    mh, mw = ctx
    return (np.ascontiguousarray(mh.T @ g @ mw),)


def resample(x, mh, mw):
    """Apply separable resampling matrices: out = mh @ x @ mw.T."""
    return np.ascontiguousarray(mh.astype(x.dtype) @ x @ mw.T.astype(x.dtype))


@_register("bilinear_resize", _resample_backward)
def bilinear_resize(x, *, scale):
    if scale < 1:
        raise ShapeError("scale must be >= 1")
    mh = bilinear_matrix(x.shape[2], scale, x.dtype)
    mw = bilinear_matrix(x.shape[3], scale, x.dtype)
    return resample(x, mh, mw), (mh, mw)


def _concat_backward(ctx, g, needs):
    bounds = np.cumsum((0,) + ctx)
    return tuple(
        np.ascontiguousarray(g[:, bounds[i] : bounds[i + 1]]) for i in range(len(ctx))
    )


@_register("concat", _concat_backward)
def concat(*xs):
    if not xs:
        raise ShapeError("concat of nothing")
    n, _, h, w = xs[0].shape
    for t in xs[1:]:
        if (t.shape[0], t.shape[2], t.shape[3]) != (n, h, w):
            raise ShapeError(f"concat spatial mismatch: {xs[0].shape} vs {t.shape}")
    return np.concatenate(xs, axis=1), tuple(t.shape[1] for t in xs)


def _slice_backward(ctx, g, needs):
    shape, start, stop = ctx
    gx = np.zeros(shape, dtype=g.dtype)
    gx[:, start:stop] = g
    return (gx,)


@_register("slice_channels", _slice_backward)
def slice_channels(x, *, start, stop):
    if not 0 <= start < stop <= x.shape[1]:
        raise ShapeError(f"channel slice [{start}:{stop}] out of range for {x.shape[1]}")
    return np.ascontiguousarray(x[:, start:stop]), (x.shape, start, stop)


def _repeat_backward(ctx, g, needs):
    n, c, h, w = g.shape
    return (g.reshape(n, c // ctx, ctx, h, w).sum(axis=2),)


@_register("repeat_channels", _repeat_backward)
def repeat_channels(x, *, times):
    """Repeat each channel ``times`` times consecutively (RRR..GGG..BBB..)."""
    return np.repeat(x, times, axis=1), times


# ---------------------------------------------------------------- elementwise


@_register("add", lambda ctx, g, needs: (g, g))
def add(a, b):
    if a.shape != b.shape:
        raise ShapeError(f"add shape mismatch: {a.shape} vs {b.shape}")
    return a + b, None


@_register("scale", lambda ctx, g, needs: (g * ctx,))
def scale(x, *, factor):
    return (x * factor).astype(x.dtype, copy=False), factor


@_register("clip", lambda ctx, g, needs: (g * ctx,))
def clip(x, *, lo, hi):
    if lo > hi:
        raise ValueError(f"clip bounds reversed: lo={lo} > hi={hi}")
    inside = ((x >= lo) & (x <= hi)).astype(x.dtype)
    return np.clip(x, lo, hi).astype(x.dtype, copy=False), inside


def _pad_const_backward(ctx, g, needs):
    pad, h, w = ctx
    gx = np.ascontiguousarray(g[:, :, pad : pad + h, pad : pad + w])
    gv = g.sum(axis=(0, 2, 3)) - gx.sum(axis=(0, 2, 3)) if needs[1] else None
    return gx, gv


@_register("pad_const", _pad_const_backward)
def pad_const(x, values, *, pad):
    """Pad spatially with a per-channel constant instead of zero."""
    n, c, h, w = x.shape
    if values.shape != (c,):
        raise ShapeError(f"pad values {values.shape} do not match {c} channels")
    out = np.empty((n, c, h + 2 * pad, w + 2 * pad), dtype=x.dtype)
    out[...] = values.reshape(1, c, 1, 1)
    out[:, :, pad : pad + h, pad : pad + w] = x
    return out, (pad, h, w)


@_register(
    "scale_kernel",
    lambda ctx, g, needs: ((g * ctx).sum(axis=(1, 2, 3)),),
)
def scale_kernel(s, *, mask):
    """Per-output-channel scaled copy of a fixed (k, k) mask -> (c, 1, k, k)."""
    mask = np.asarray(mask, dtype=s.dtype)
    return s.reshape(-1, 1, 1, 1) * mask[None, None], mask[None, None]


# ---------------------------------------------------------------- reductions / losses


@_register("sum", lambda ctx, g, needs: (np.full(ctx[0], g, dtype=ctx[1]),))
def reduce_sum(x):
    return np.asarray(x.sum(), dtype=x.dtype), (x.shape, x.dtype)


@_register("mean", lambda ctx, g, needs: (np.full(ctx[0], g / ctx[2], dtype=ctx[1]),))
def reduce_mean(x):
    return np.asarray(x.mean(), dtype=x.dtype), (x.shape, x.dtype, max(x.size, 1))


def _check_pair(pred, target):
    if pred.shape != target.shape:
        raise ShapeError(f"loss shape mismatch: {pred.shape} vs {target.shape}")


def _pair_grads(gd, needs):
    return (gd if needs[0] else None, -gd if len(needs) > 1 and needs[1] else None)


@_register("l1_loss", lambda ctx, g, needs: _pair_grads(g * np.sign(ctx) / ctx.size, needs))
def l1_loss(pred, target):
    _check_pair(pred, target)
    d = pred - target
    return np.asarray(np.abs(d).mean(), dtype=pred.dtype), d


@_register("mse_loss", lambda ctx, g, needs: _pair_grads(g * 2 * ctx / ctx.size, needs))
def mse_loss(pred, target):
    _check_pair(pred, target)
    d = pred - target
    return np.asarray((d * d).mean(), dtype=pred.dtype), d


@_register(
    "charbonnier_loss",
    lambda ctx, g, needs: _pair_grads(g * ctx[0] / ctx[1] / ctx[0].size, needs),
)
def charbonnier_loss(pred, target, *, eps=1e-3):
    _check_pair(pred, target)
    d = pred - target
    r = np.sqrt(d * d + pred.dtype.type(eps * eps))
    return np.asarray(r.mean(), dtype=pred.dtype), (d, r)
