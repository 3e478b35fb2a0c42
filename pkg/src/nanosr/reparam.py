"""Structural re-parametrization: collapse multi-branch blocks into one conv.

All fusion arithmetic is done in float64 and rounded to float32 once.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .tensor import ConvParams, ShapeError
from .zoo.graph import EDGE_KERNELS, Branch, GraphError, LayerNode, ModelGraph, _block, _Eager


def _f64(a):
    return np.asarray(a, dtype=np.float64)


def _bias(p: ConvParams) -> np.ndarray:
    return np.zeros(p.c_out) if p.bias is None else _f64(p.bias)


def embed_to_3x3(p: ConvParams) -> ConvParams:
    """Zero-pad a 1x1 kernel to the centre of a 3x3 one (3x3 passes through)."""
    k = p.kernel_size
    if k > 3 or k % 2 == 0:
        raise ShapeError(f"cannot embed a {k}x{k} kernel into 3x3")
    if k == 3:
        return p
    w = np.zeros(p.weight.shape[:2] + (3, 3))
    w[:, :, 1, 1] = _f64(p.weight)[:, :, 0, 0]
    return ConvParams(w, None if p.bias is None else _f64(p.bias), p.stride, p.padding + 1, p.groups)


def _dense(p: ConvParams) -> ConvParams:
    """Expand a grouped conv into the equivalent dense one."""
    if p.groups == 1:
        return p
    co, cpg, kh, kw = p.weight.shape
    opg = co // p.groups
    w = np.zeros((co, cpg * p.groups, kh, kw))
    src = _f64(p.weight)
    for g in range(p.groups):
        w[g * opg : (g + 1) * opg, g * cpg : (g + 1) * cpg] = src[g * opg : (g + 1) * opg]
    return ConvParams(w, p.bias, p.stride, p.padding, 1)


def fuse_parallel(branches) -> ConvParams:
    """Sum of same-geometry convs: W = sum W_i, b = sum b_i."""
    branches = [_dense(b) for b in branches]
    if not branches:
        raise ShapeError("no branches to fuse")
    first = branches[0]
    if len(branches) == 1:
        return first
    for b in branches[1:]:
        if (b.weight.shape, b.stride, b.padding) != (first.weight.shape, first.stride, first.padding):
            raise ShapeError(
                f"branch mismatch: {b.weight.shape}/s{b.stride}/p{b.padding} vs "
                f"{first.weight.shape}/s{first.stride}/p{first.padding}"
            )
    w = sum(_f64(b.weight) for b in branches)
    bias = sum(_bias(b) for b in branches)
    return ConvParams(w, bias, first.stride, first.padding, 1)


def fuse_sequential(first: ConvParams, second: ConvParams) -> ConvParams:
    """Fold a 1x1 conv into the k x k conv that consumes it.

    Exact everywhere provided the intermediate is padded with ``first``'s
    bias, which is how the training-time branches are defined.
    """
    if first.kernel_size != 1 or first.stride != 1 or first.padding != 0 or first.groups != 1:
        raise ShapeError("first conv must be a plain 1x1, stride 1, no padding")
    second = _dense(second)
    if first.c_out != second.c_in:
        raise ShapeError(f"channel mismatch: {first.c_out} -> {second.c_in}")
    w1 = _f64(first.weight)[:, :, 0, 0]  # (mid, in)
    w2 = _f64(second.weight)  # (out, mid, k, k)
    w = np.einsum("omij,mc->ocij", w2, w1)
    b = _bias(second) + np.einsum("omij,m->o", w2, _bias(first))
    pad = second.padding if second.padding else (second.kernel_size - 1) // 2
    return ConvParams(w, b, second.stride, pad, 1)


@dataclass(frozen=True)
class BranchBlock:
    """Training-time multi-branch block whose branch outputs are summed."""

    branches: tuple[Branch, ...]
    params: Mapping[str, np.ndarray]

    @classmethod
    def from_node(cls, g: ModelGraph, node: LayerNode) -> "BranchBlock":
        if node.op != "block":
            raise GraphError(f"node {node.id} is not a block")
        names = [n for br in node.attrs["branches"] for n in br.params]
        return cls(tuple(node.attrs["branches"]), {n: g.params[n] for n in names})

    def __call__(self, x) -> np.ndarray:
        node = LayerNode("block", "block", ("x",), (), {"branches": self.branches})
        return _block(_Eager(self.params), node, np.asarray(x))


def branch_to_conv(br: Branch, params) -> ConvParams:
    p = [params[n] for n in br.params]
    if br.kind == "conv":
        return embed_to_3x3(ConvParams(p[0], p[1], padding=(p[0].shape[2] - 1) // 2))
    if br.kind == "pw_conv":
        return fuse_sequential(ConvParams(p[0], p[1]), ConvParams(p[2], p[3]))
    if br.kind == "pw_edge":
        if br.edge not in EDGE_KERNELS:
            raise ShapeError(f"unknown edge filter {br.edge!r}")
        c = np.shape(p[2])[0]
        dw = _f64(p[2]).reshape(c, 1, 1, 1) * EDGE_KERNELS[br.edge][None, None]
        return fuse_sequential(ConvParams(p[0], p[1]), ConvParams(dw, p[3], groups=c))
    raise ShapeError(f"unsupported branch form {br.kind!r}")


def fuse_block(block: BranchBlock) -> ConvParams:
    """Embed, fold sequential pairs, then sum: one 3x3 conv with padding 1."""
    fused = fuse_parallel([branch_to_conv(br, block.params) for br in block.branches])
    return ConvParams(
        fused.weight.astype(np.float32),
        _bias(fused).astype(np.float32),
        fused.stride,
        fused.padding,
        1,
    )


def fuse_model(g: ModelGraph) -> ModelGraph:
    """Replace every block node with its fused conv; other nodes untouched."""
    if not any(n.op == "block" for n in g.nodes):
        return g
    block_params = {
        name for n in g.nodes if n.op == "block" for br in n.attrs["branches"] for name in br.params
    }
    nodes, params, fan_in = [], {}, {}
    replaced = {}
    for n in g.nodes:
        if n.op != "block":
            nodes.append(n)
            continue
        p = fuse_block(BranchBlock.from_node(g, n))
        w_name, b_name = f"{n.id}.weight", f"{n.id}.bias"
        replaced[n.id] = (w_name, p.weight, b_name, p.bias)
        nodes.append(LayerNode(n.id, "conv", n.inputs, (w_name, b_name), {"stride": 1, "padding": 1, "groups": 1}))
    # keep declaration order: fused tensors take the place of their block's first tensor
    seen_blocks = set()
    owner = {name: n.id for n in g.nodes if n.op == "block" for br in n.attrs["branches"] for name in br.params}
    for name, value in g.params.items():
        if name not in block_params:
            params[name] = value
            fan_in[name] = g.fan_in.get(name, 1)
            continue
        nid = owner[name]
        if nid in seen_blocks:
            continue
        seen_blocks.add(nid)
        w_name, w, b_name, b = replaced[nid]
        params[w_name], params[b_name] = w, b
        fan_in[w_name] = fan_in[b_name] = int(np.prod(w.shape[1:]))
    fused = dataclasses.replace(g, nodes=tuple(nodes), params=params, fan_in=fan_in)
    fused.validate()
    return fused
