"""Model graphs: an ordered list of layer nodes plus named parameter arrays.

A graph is executed by a single interpreter that either calls kernels
directly (inference) or records them on a :class:`~nanosr.tensor.Tape`
(training), so both paths share every line of op dispatch.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from ..tensor import KERNELS, ShapeError, Tape, Var
from ..tensor.kernels import conv_out_size

EDGE_KERNELS = {
    "sobel_x": np.array([[1, 0, -1], [2, 0, -2], [1, 0, -1]], dtype=np.float64),
    "sobel_y": np.array([[1, 2, 1], [0, 0, 0], [-1, -2, -1]], dtype=np.float64),
    "laplacian": np.array([[0, 1, 0], [1, -4, 1], [0, 1, 0]], dtype=np.float64),
}

OP_KINDS = {
    "conv",
    "transposed_conv",
    "relu",
    "leaky_relu",
    "prelu",
    "pixel_shuffle",
    "bilinear_resize",
    "concat",
    "slice",
    "add",
    "clip",
    "repeat",
    "block",
}


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class Branch:
    """One branch of a training-time multi-branch block.

    kind ``conv``: a single k x k conv, params (weight, bias).
    kind ``pw_conv``: 1x1 conv then 3x3 conv, params (w1, b1, w2, b2).
    kind ``pw_edge``: 1x1 conv then a fixed depthwise edge filter scaled per
    channel, params (w1, b1, scale, bias); ``edge`` names the filter.

    The intermediate of the two-stage branches is padded with the first conv's
    bias rather than zero, which is what makes fusion exact at borders.
    """

    kind: str
    params: tuple[str, ...]
    edge: str | None = None


@dataclass(frozen=True)
class LayerNode:
    id: str
    op: str
    inputs: tuple[str, ...]
    params: tuple[str, ...] = ()
    attrs: Mapping[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class ModelGraph:
    arch_id: str
    nodes: tuple[LayerNode, ...]
    params: Mapping[str, np.ndarray]
    inputs: tuple[str, ...] = ("frame",)
    outputs: Mapping[str, str] = field(default_factory=dict)
    state: Mapping[str, int] = field(default_factory=dict)  # slot -> channels
    fan_in: Mapping[str, int] = field(default_factory=dict)
    taps: Mapping[str, str] = field(default_factory=dict)
    scale: int = 4

    @property
    def recurrent(self) -> bool:
        return bool(self.state)

    def node(self, node_id: str) -> LayerNode:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(node_id)

    def with_params(self, params: Mapping[str, np.ndarray]) -> "ModelGraph":
        missing = set(self.params) - set(params)
        if missing:
            raise GraphError(f"missing parameters: {sorted(missing)}")
        new = {k: np.asarray(params[k], dtype=np.float32) for k in self.params}
        return dataclasses.replace(self, params=new)

    def validate(self) -> None:
        defined = set(self.inputs)
        for n in self.nodes:
            if n.op not in OP_KINDS:
                raise GraphError(f"node {n.id}: unknown op {n.op!r}")
            if n.id in defined:
                raise GraphError(f"duplicate id {n.id}")
            for i in n.inputs:
                if i not in defined:
                    raise GraphError(f"node {n.id}: input {i!r} used before definition")
            for p in n.params:
                if p not in self.params:
                    raise GraphError(f"node {n.id}: unknown parameter {p!r}")
            defined.add(n.id)
        for name, ref in self.outputs.items():
            if ref not in defined:
                raise GraphError(f"output {name} refers to undefined {ref!r}")
        if "sr" not in self.outputs:
            raise GraphError("graph declares no sr output")
        for slot in self.state:
            if slot not in self.inputs or slot not in self.outputs:
                raise GraphError(f"state slot {slot} must be both an input and an output")


# ---------------------------------------------------------------- execution


class _Eager:
    def __init__(self, params):
        self.params = params

    def __call__(self, op, *args, **attrs):
        return KERNELS[op].forward(*args, **attrs)[0]


class _Recorded:
    def __init__(self, tape: Tape, params):
        self.tape = tape
        self.params = params

    def __call__(self, op, *args, **attrs):
        return self.tape.apply(op, *args, **attrs)


def _block(ex, node: LayerNode, x):
    total = None
    for br in node.attrs["branches"]:
        p = [ex.params[name] for name in br.params]
        if br.kind == "conv":
            k = _shape(p[0])[2]
            y = ex("conv2d", x, p[0], p[1], padding=(k - 1) // 2)
        elif br.kind == "pw_conv":
            mid = ex("conv2d", x, p[0], p[1])
            y = ex("conv2d", ex("pad_const", mid, p[1], pad=1), p[2], p[3])
        elif br.kind == "pw_edge":
            mid = ex("conv2d", x, p[0], p[1])
            kernel = ex("scale_kernel", p[2], mask=EDGE_KERNELS[br.edge])
            c = _shape(p[2])[0]
            y = ex("conv2d", ex("pad_const", mid, p[1], pad=1), kernel, p[3], groups=c)
        else:
            raise GraphError(f"unsupported branch kind {br.kind!r}")
        total = y if total is None else ex("add", total, y)
    return total


def _shape(v):
    return v.data.shape if isinstance(v, Var) else np.shape(v)


def _exec_node(ex, node: LayerNode, args):
    a = node.attrs
    p = [ex.params[name] for name in node.params]
    op = node.op
    if op == "conv":
        return ex(
            "conv2d",
            args[0],
            *p,
            stride=a.get("stride", 1),
            padding=a.get("padding", 0),
            groups=a.get("groups", 1),
        )
    if op == "transposed_conv":
        return ex("transposed_conv2d", args[0], *p, stride=a["stride"], padding=a.get("padding", 0))
    if op == "relu":
        return ex("relu", args[0])
    if op == "leaky_relu":
        return ex("leaky_relu", args[0], alpha=a["alpha"])
    if op == "prelu":
        return ex("prelu", args[0], p[0])
    if op == "pixel_shuffle":
        return ex("pixel_shuffle", args[0], r=a["r"], inverse=a.get("inverse", False))
    if op == "bilinear_resize":
        return ex("bilinear_resize", args[0], scale=a["scale"])
    if op == "concat":
        return ex("concat", *args)
    if op == "slice":
        return ex("slice_channels", args[0], start=a["start"], stop=a["stop"])
    if op == "add":
        return ex("add", args[0], args[1])
    if op == "clip":
        return ex("clip", args[0], lo=a.get("lo", 0.0), hi=a.get("hi", 1.0))
    if op == "repeat":
        return ex("repeat_channels", args[0], times=a["times"])
    if op == "block":
        return _block(ex, node, args[0])
    raise GraphError(f"unknown op {op!r}")


def run_graph(g: ModelGraph, feeds: Mapping[str, Any], tape: Tape | None = None, params=None) -> dict:
    """Evaluate every node; returns {slot or node id: value}.

    With a tape, ``params`` maps parameter names to tape leaves (Vars) and the
    returned values are Vars; without one, arrays in ``g.params`` are used.
    """
    missing = [s for s in g.inputs if s not in feeds]
    if missing:
        raise GraphError(f"missing graph inputs: {missing}")
    if tape is None:
        ex = _Eager(g.params if params is None else params)
    else:
        ex = _Recorded(tape, g.params if params is None else params)
    values = dict(feeds)
    for node in g.nodes:
        values[node.id] = _exec_node(ex, node, [values[i] for i in node.inputs])
    return values


def _check_frame(frame, name="frame"):
    arr = np.asarray(frame.data if isinstance(frame, Var) else frame)
    if arr.ndim != 4 or arr.shape[1] != 3:
        raise ShapeError(f"{name} must be (n, 3, h, w), got {arr.shape}")


def forward_model(g: ModelGraph, frame) -> np.ndarray:
    """Single-frame SR forward pass."""
    if g.recurrent:
        raise GraphError(f"{g.arch_id} is recurrent; use forward_recurrent")
    _check_frame(frame)
    x = np.asarray(frame, dtype=np.float32)
    return run_graph(g, {"frame": x})[g.outputs["sr"]]


def frame_slots(g: ModelGraph) -> tuple[str, ...]:
    return tuple(s for s in g.inputs if s not in g.state)


def zero_state(g: ModelGraph, n: int, h: int, w: int) -> dict[str, np.ndarray]:
    return {slot: np.zeros((n, c, h, w), np.float32) for slot, c in g.state.items()}


def forward_recurrent(g: ModelGraph, frames, state_in=None):
    """One time step of a recurrent graph.

    ``frames`` is the window ordered like the graph's frame slots (e.g.
    (x_t, x_t+1) or (x_t-1, x_t, x_t+1)). Returns (sr, state_out).
    """
    if not g.recurrent:
        raise GraphError(f"{g.arch_id} is not recurrent")
    slots = frame_slots(g)
    frames = list(frames)
    if len(frames) != len(slots):
        raise GraphError(f"{g.arch_id} expects a window of {len(slots)} frames, got {len(frames)}")
    for f in frames:
        _check_frame(f)
    n, _, h, w = np.shape(frames[0])
    if state_in is None:
        state_in = zero_state(g, n, h, w)
    for slot, c in g.state.items():
        if slot not in state_in or np.shape(state_in[slot]) != (n, c, h, w):
            raise ShapeError(
                f"state {slot} must be {(n, c, h, w)}, got {np.shape(state_in.get(slot))}"
            )
    feeds = {s: np.asarray(f, np.float32) for s, f in zip(slots, frames)}
    feeds.update({k: np.asarray(v, np.float32) for k, v in state_in.items()})
    vals = run_graph(g, feeds)
    return vals[g.outputs["sr"]], {slot: vals[g.outputs[slot]] for slot in g.state}


def window_at(frames, t: int, slots) -> list:
    """Frames feeding step ``t``; sequence edges are clamped (duplicated)."""
    last = len(frames) - 1
    offsets = {"prev": -1, "frame": 0, "next": 1}
    return [frames[min(max(t + offsets[s], 0), last)] for s in slots]


def run_sequence(g: ModelGraph, frames) -> list[np.ndarray]:
    """Upscale a whole sequence, single-frame or recurrent, from zero state."""
    if not g.recurrent:
        return [forward_model(g, f) for f in frames]
    slots = frame_slots(g)
    state = None
    out = []
    for t in range(len(frames)):
        sr, state = forward_recurrent(g, window_at(frames, t, slots), state)
        out.append(sr)
    return out


# ---------------------------------------------------------------- accounting


def param_count(g: ModelGraph) -> int:
    return int(sum(np.asarray(v).size for v in g.params.values()))


def infer_shapes(g: ModelGraph, input_dims: tuple[int, int, int, int]) -> dict[str, tuple]:
    """Static shape propagation; ``input_dims`` is the (n, 3, h, w) frame shape."""
    n, _, h, w = input_dims
    shapes = {}
    for slot in g.inputs:
        c = g.state.get(slot, 3)
        shapes[slot] = (n, c, h, w)
    for node in g.nodes:
        ins = [shapes[i] for i in node.inputs]
        a = node.attrs
        op = node.op
        if op in ("conv", "block"):
            if op == "conv":
                wshape = g.params[node.params[0]].shape
                s, pad = a.get("stride", 1), a.get("padding", 0)
                co = wshape[0]
            else:
                wshape = _block_out_weight_shape(g, node)
                s, pad, co = 1, 1, wshape[0]
            k = wshape[2]
            shapes[node.id] = (
                ins[0][0],
                co,
                conv_out_size(ins[0][2], k, s, pad),
                conv_out_size(ins[0][3], k, s, pad),
            )
        elif op == "transposed_conv":
            co, _, k, _ = g.params[node.params[0]].shape
            s, pad = a["stride"], a.get("padding", 0)
            shapes[node.id] = (
                ins[0][0],
                co,
                (ins[0][2] - 1) * s + k - 2 * pad,
                (ins[0][3] - 1) * s + k - 2 * pad,
            )
        elif op == "pixel_shuffle":
            r = a["r"]
            nn, c, hh, ww = ins[0]
            if a.get("inverse", False):
                shapes[node.id] = (nn, c * r * r, hh // r, ww // r)
            else:
                shapes[node.id] = (nn, c // (r * r), hh * r, ww * r)
        elif op == "bilinear_resize":
            nn, c, hh, ww = ins[0]
            shapes[node.id] = (nn, c, hh * a["scale"], ww * a["scale"])
        elif op == "concat":
            shapes[node.id] = (ins[0][0], sum(s[1] for s in ins), ins[0][2], ins[0][3])
        elif op == "slice":
            nn, _, hh, ww = ins[0]
            shapes[node.id] = (nn, a["stop"] - a["start"], hh, ww)
        elif op == "repeat":
            nn, c, hh, ww = ins[0]
            shapes[node.id] = (nn, c * a["times"], hh, ww)
        else:
            shapes[node.id] = ins[0]
    return shapes


def _block_out_weight_shape(g, node):
    br = node.attrs["branches"][0]
    if br.kind == "conv":
        co, ci, _, _ = g.params[br.params[0]].shape
        return (co, ci, 3, 3)
    co = g.params[br.params[-1]].shape[0]
    ci = g.params[br.params[0]].shape[1]
    return (co, ci, 3, 3)


def count_macs(g: ModelGraph, input_dims) -> int:
    """Multiply-accumulates of all convolutions for one forward pass."""
    shapes = infer_shapes(g, tuple(input_dims))
    total = 0
    for node in g.nodes:
        out = shapes[node.id]
        hw = out[0] * out[2] * out[3]
        if node.op == "conv":
            co, cpg, kh, kw = g.params[node.params[0]].shape
            total += kh * kw * cpg * co * hw
        elif node.op == "transposed_conv":
            co, ci, kh, kw = g.params[node.params[0]].shape
            src = shapes[node.inputs[0]]
            total += kh * kw * ci * co * src[0] * src[2] * src[3]
        elif node.op == "block":
            for br in node.attrs["branches"]:
                ws = [g.params[p].shape for p in br.params]
                if br.kind == "conv":
                    co, ci, kh, kw = ws[0]
                    total += kh * kw * ci * co * hw
                elif br.kind == "pw_conv":
                    mid, ci = ws[0][0], ws[0][1]
                    total += ci * mid * hw + 9 * mid * ws[2][0] * hw
                else:
                    co, ci = ws[0][0], ws[0][1]
                    total += ci * co * hw + 9 * co * hw
    return int(total)
