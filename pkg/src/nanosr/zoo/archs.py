"""Builders for the ten challenge architectures and their architecture cards."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .graph import Branch, GraphError, LayerNode, ModelGraph

ARCH_IDS = (
    "mvideosr",
    "rcbsr",
    "fighter",
    "xjtu",
    "boe",
    "genmedia",
    "ncut",
    "mortar",
    "redcat",
    "team221b",
)

ECB_EDGES = ("sobel_x", "sobel_y", "laplacian")


class _Builder:
    def __init__(self, arch_id: str):
        self.arch_id = arch_id
        self.nodes: list[LayerNode] = []
        self.params: dict[str, np.ndarray] = {}
        self.fan_in: dict[str, int] = {}

    def _param(self, name, shape, fan_in):
        if name in self.params:
            raise GraphError(f"duplicate parameter {name}")
        self.params[name] = np.zeros(shape, np.float32)
        self.fan_in[name] = int(fan_in)
        return name

    def add(self, node_id, op, inputs, params=(), **attrs):
        self.nodes.append(LayerNode(node_id, op, tuple(inputs), tuple(params), attrs))
        return node_id

    def conv(self, node_id, x, cin, cout, k=3, groups=1, padding=None):
        fan = cin // groups * k * k
        w = self._param(f"{node_id}.weight", (cout, cin // groups, k, k), fan)
        b = self._param(f"{node_id}.bias", (cout,), fan)
        pad = (k - 1) // 2 if padding is None else padding
        return self.add(node_id, "conv", [x], [w, b], stride=1, padding=pad, groups=groups)

    def relu(self, node_id, x):
        return self.add(node_id, "relu", [x])

    def ecb(self, node_id, x, cin, cout, mid_mult=2):
        branches = []
        w = self._param(f"{node_id}.conv3.weight", (cout, cin, 3, 3), cin * 9)
        b = self._param(f"{node_id}.conv3.bias", (cout,), cin * 9)
        branches.append(Branch("conv", (w, b)))
        mid = cout * mid_mult
        w1 = self._param(f"{node_id}.expand.w1", (mid, cin, 1, 1), cin)
        b1 = self._param(f"{node_id}.expand.b1", (mid,), cin)
        w2 = self._param(f"{node_id}.expand.w2", (cout, mid, 3, 3), mid * 9)
        b2 = self._param(f"{node_id}.expand.b2", (cout,), mid * 9)
        branches.append(Branch("pw_conv", (w1, b1, w2, b2)))
        for edge in ECB_EDGES:
            w1 = self._param(f"{node_id}.{edge}.w1", (cout, cin, 1, 1), cin)
            b1 = self._param(f"{node_id}.{edge}.b1", (cout,), cin)
            s = self._param(f"{node_id}.{edge}.scale", (cout,), 9)
            bb = self._param(f"{node_id}.{edge}.bias", (cout,), 9)
            branches.append(Branch("pw_edge", (w1, b1, s, bb), edge))
        return self.add(node_id, "block", [x], (), branches=tuple(branches))

    def rep33_11(self, node_id, x, cin, cout):
        """3x3 conv trained alongside a parallel 1x1 conv."""
        w = self._param(f"{node_id}.conv3.weight", (cout, cin, 3, 3), cin * 9)
        b = self._param(f"{node_id}.conv3.bias", (cout,), cin * 9)
        w1 = self._param(f"{node_id}.conv1.weight", (cout, cin, 1, 1), cin)
        b1 = self._param(f"{node_id}.conv1.bias", (cout,), cin)
        return self.add(
            node_id,
            "block",
            [x],
            (),
            branches=(Branch("conv", (w, b)), Branch("conv", (w1, b1))),
        )

    def graph(self, outputs, inputs=("frame",), state=None, taps=None, scale=4) -> ModelGraph:
        g = ModelGraph(
            arch_id=self.arch_id,
            nodes=tuple(self.nodes),
            params=self.params,
            inputs=tuple(inputs),
            outputs=dict(outputs),
            state=dict(state or {}),
            fan_in=self.fan_in,
            taps=dict(taps or {}),
            scale=scale,
        )
        g.validate()
        return g


def _conv_p(ci, co, k=3, groups=1):
    return ci // groups * co * k * k + co


# ---------------------------------------------------------------- builders


def _mvideosr(cfg):
    c, s = cfg["channels"], cfg["scale"]
    b = _Builder("mvideosr")
    x = b.conv("conv1", "frame", 3, c)
    x = b.conv("conv2", x, c, c)
    b._param("prelu.slope", (c,), 1)
    x = b.add("prelu", "prelu", [x], ["prelu.slope"])
    x = b.conv("conv3", x, c, c)
    feat = x
    x = b.conv("conv4", x, c, 3 * s * s)
    x = b.add("shuffle", "pixel_shuffle", [x], r=s)
    return b.graph({"sr": x}, taps={"features": feat}, scale=s)


def _mvideosr_params(cfg):
    c, s = cfg["channels"], cfg["scale"]
    return _conv_p(3, c) + 2 * _conv_p(c, c) + _conv_p(c, 3 * s * s) + c


def _ecb_params(ci, co, mid_mult):
    mid = co * mid_mult
    edge = ci * co + co + co + co
    return _conv_p(ci, co) + (ci * mid + mid + 9 * mid * co + co) + 3 * edge


def _rcbsr(cfg):
    c, m, mult = cfg["channels"], cfg["blocks"], cfg["ecb_mid_mult"]
    b = _Builder("rcbsr")
    x = b.relu("head.act", b.ecb("head", "frame", 3, c, mult))
    for i in range(m):
        x = b.relu(f"body{i}.act", b.ecb(f"body{i}", x, c, c, mult))
    feat = x
    t = b.ecb("tail", x, c, 48, mult)
    anchor = b.add("anchor", "repeat", ["frame"], times=16)
    x = b.add("residual", "add", [t, anchor])
    x = b.add("shuffle", "pixel_shuffle", [x], r=4)
    return b.graph({"sr": x}, taps={"features": feat})


def _rcbsr_params(cfg):
    c, m, mult = cfg["channels"], cfg["blocks"], cfg["ecb_mid_mult"]
    return _ecb_params(3, c, mult) + m * _ecb_params(c, c, mult) + _ecb_params(c, 48, mult)


def _rcbsr_fused_params(cfg):
    c, m = cfg["channels"], cfg["blocks"]
    return _conv_p(3, c) + m * _conv_p(c, c) + _conv_p(c, 48)


def _fighter(cfg):
    c = cfg["channels"]
    b = _Builder("fighter")
    x = b.conv("ds1.dw", "frame", 3, 3, groups=3)
    first = b.relu("ds1.act", b.conv("ds1.pw", x, 3, c, k=1))
    x = b.conv("ds2.dw", first, c, c, groups=c)
    x = b.relu("ds2.act", b.conv("ds2.pw", x, c, c, k=1))
    feat = b.add("residual", "add", [x, first])
    x = b.conv("tail", feat, c, 48)
    x = b.add("shuffle", "pixel_shuffle", [x], r=4)
    return b.graph({"sr": x}, taps={"features": feat})


def _fighter_params(cfg):
    c = cfg["channels"]
    return (
        _conv_p(3, 3, groups=3)
        + _conv_p(3, c, k=1)
        + _conv_p(c, c, groups=c)
        + _conv_p(c, c, k=1)
        + _conv_p(c, 48)
    )


def _xjtu(cfg):
    c = cfg["channels"]
    b = _Builder("xjtu")
    x = b.conv("conv1", "frame", 3, c)
    x = b.relu("act2", b.conv("conv2", x, c, c))
    x = b.relu("act3", b.conv("conv3", x, c, c))
    feat = x
    x = b.conv("conv4", x, c, 48)
    x = b.add("shuffle", "pixel_shuffle", [x], r=4)
    return b.graph({"sr": x}, taps={"features": feat})


def _xjtu_params(cfg):
    c = cfg["channels"]
    return _conv_p(3, c) + 2 * _conv_p(c, c) + _conv_p(c, 48)


def _boe(cfg):
    c = cfg["channels"]
    b = _Builder("boe")
    x = "frame"
    cin = 3
    for i in range(1, 5):
        x = b.relu(f"act{i}", b.conv(f"conv{i}", x, cin, c))
        cin = c
    tap = b.conv("conv5", x, c, c)
    fan = c * 16
    b._param("up.weight", (c, c, 4, 4), fan)
    b._param("up.bias", (c,), fan)
    x = b.add("up", "transposed_conv", [tap], ["up.weight", "up.bias"], stride=4, padding=0)
    x = b.relu("act6", b.conv("conv6", x, c, 3))
    return b.graph({"sr": x}, taps={"distill": tap, "features": tap})


def _boe_params(cfg):
    c = cfg["channels"]
    return _conv_p(3, c) + 4 * _conv_p(c, c) + (c * c * 16 + c) + _conv_p(c, 3)


def _genmedia(cfg):
    c, depth = cfg["channels"], cfg["depth"]
    b = _Builder("genmedia")
    first = b.relu("act1", b.conv("conv1", "frame", 3, c))
    x = first
    for i in range(depth):
        x = b.relu(f"body{i}.act", b.conv(f"body{i}", x, c, c))
    feat = b.add("skip", "add", [x, first])
    x = b.conv("tail", feat, c, 48)
    anchor = b.add("anchor", "repeat", ["frame"], times=16)
    x = b.add("cat", "concat", [x, anchor])
    x = b.conv("fuse", x, 96, 48, k=1)
    x = b.add("clip", "clip", [x], lo=0.0, hi=1.0)
    x = b.add("shuffle", "pixel_shuffle", [x], r=4)
    return b.graph({"sr": x}, taps={"features": feat})


def _genmedia_params(cfg):
    c, depth = cfg["channels"], cfg["depth"]
    return _conv_p(3, c) + depth * _conv_p(c, c) + _conv_p(c, 48) + _conv_p(96, 48, k=1)


def _ncut(cfg):
    c = cfg["channels"]
    b = _Builder("ncut")
    x = b.relu("act1", b.conv("conv1", "frame", 3, c))
    x = b.relu("act2", b.conv("conv2", x, c, c))
    feat = x
    x = b.conv("conv3", x, c, 48)
    x = b.add("shuffle", "pixel_shuffle", [x], r=4)
    return b.graph({"sr": x}, taps={"features": feat})


def _ncut_params(cfg):
    c = cfg["channels"]
    return _conv_p(3, c) + _conv_p(c, c) + _conv_p(c, 48)


def _mortar(cfg):
    c, layers = cfg["channels"], cfg["layers"]
    b = _Builder("mortar")
    x, cin = "frame", 3
    for i in range(1, layers):
        x = b.relu(f"act{i}", b.rep33_11(f"conv{i}", x, cin, c))
        cin = c
    feat = x
    x = b.rep33_11(f"conv{layers}", x, c, 48)
    x = b.add("shuffle", "pixel_shuffle", [x], r=4)
    return b.graph({"sr": x}, taps={"features": feat})


def _mortar_fused_params(cfg):
    c, layers = cfg["channels"], cfg["layers"]
    return _conv_p(3, c) + (layers - 2) * _conv_p(c, c) + _conv_p(c, 48)


def _mortar_params(cfg):
    c, layers = cfg["channels"], cfg["layers"]
    return _mortar_fused_params(cfg) + (3 * c + c) + (layers - 2) * (c * c + c) + (c * 48 + 48)


def _imdb(b, name, x, c):
    h = c // 2
    s1 = b.relu(f"{name}.act1", b.conv(f"{name}.c1", x, c, c))
    d1 = b.add(f"{name}.d1", "slice", [s1], start=0, stop=h)
    r1 = b.add(f"{name}.r1", "slice", [s1], start=h, stop=c)
    s2 = b.relu(f"{name}.act2", b.conv(f"{name}.c2", r1, c - h, c))
    d2 = b.add(f"{name}.d2", "slice", [s2], start=0, stop=h)
    r2 = b.add(f"{name}.r2", "slice", [s2], start=h, stop=c)
    d3 = b.conv(f"{name}.c3", r2, c - h, h)
    cat = b.add(f"{name}.cat", "concat", [d1, d2, d3])
    fused = b.conv(f"{name}.fuse", cat, 3 * h, c, k=1)
    return b.add(f"{name}.res", "add", [fused, x])


def _imdb_params(c):
    h = c // 2
    return _conv_p(c, c) + _conv_p(c - h, c) + _conv_p(c - h, h) + _conv_p(3 * h, c, k=1)


def _redcat(cfg):
    c, nb = cfg["channels"], cfg["blocks"]
    if c % 2:
        raise GraphError("redcat channels must be even")
    b = _Builder("redcat")
    x = b.add("cat", "concat", ["frame", "next", "hidden"])
    x = b.relu("head.act", b.conv("head", x, 6 + c, c))
    for i in range(nb):
        x = _imdb(b, f"imdb{i}", x, c)
    hidden = x
    t = b.conv("tail", hidden, c, 48)
    t = b.add("shuffle", "pixel_shuffle", [t], r=4)
    up = b.add("upsample", "bilinear_resize", ["frame"], scale=4)
    sr = b.add("skip", "add", [t, up])
    return b.graph(
        {"sr": sr, "hidden": hidden},
        inputs=("frame", "next", "hidden"),
        state={"hidden": c},
        taps={"features": hidden},
    )


def _redcat_params(cfg):
    c, nb = cfg["channels"], cfg["blocks"]
    return _conv_p(6 + c, c) + nb * _imdb_params(c) + _conv_p(c, 48)


def _team221b(cfg):
    f = cfg["channels"]
    b = _Builder("team221b")
    groups = {}
    for name, neighbour, state in (("fwd", "prev", "h_fwd"), ("bwd", "next", "h_bwd")):
        x = b.add(f"{name}.cat", "concat", [neighbour, "frame", state])
        x = b.relu(f"{name}.act1", b.conv(f"{name}.conv1", x, 6 + f, f))
        groups[name] = b.relu(f"{name}.act2", b.conv(f"{name}.conv2", x, f, f))
    x = b.add("merge", "concat", [groups["fwd"], groups["bwd"]])
    x = b.relu("rec.act1", b.conv("rec.conv1", x, 2 * f, f))
    feat = x
    x = b.conv("rec.conv2", x, f, 48)
    x = b.add("shuffle", "pixel_shuffle", [x], r=4)
    up = b.add("upsample", "bilinear_resize", ["frame"], scale=4)
    sr = b.add("skip", "add", [x, up])
    return b.graph(
        {"sr": sr, "h_fwd": groups["fwd"], "h_bwd": groups["bwd"]},
        inputs=("prev", "frame", "next", "h_fwd", "h_bwd"),
        state={"h_fwd": f, "h_bwd": f},
        taps={"features": feat},
    )


def _team221b_params(cfg):
    f = cfg["channels"]
    return 2 * (_conv_p(6 + f, f) + _conv_p(f, f)) + _conv_p(2 * f, f) + _conv_p(f, 48)


# ---------------------------------------------------------------- cards


@dataclass(frozen=True)
class ArchCard:
    arch_id: str
    team: str
    summary: str
    defaults: dict
    build: Callable
    count: Callable
    fused_count: Callable | None = None

    def expected_params(self, config=None) -> int:
        return self.count(resolve_config(self.arch_id, config))

    def expected_fused_params(self, config=None) -> int:
        fn = self.fused_count or self.count
        return fn(resolve_config(self.arch_id, config))


CARDS: dict[str, ArchCard] = {
    card.arch_id: card
    for card in [
        ArchCard(
            "mvideosr",
            "MVideoSR",
            "conv3x3 3->6, conv3x3 6->6, PReLU(6), conv3x3 6->6, conv3x3 6->3*s^2, "
            "pixel shuffle s. PReLU placement after the second conv is a choice; "
            "scale=2 gives the pre-training variant with a 12-channel last conv.",
            {"channels": 6, "scale": 4},
            _mvideosr,
            _mvideosr_params,
        ),
        ArchCard(
            "rcbsr",
            "ZX_VIP",
            "ECB head 3->C + ReLU, M ECB blocks C->C + ReLU, ECB tail C->48, "
            "input repeated 16x per channel added as anchor, pixel shuffle 4. "
            "Each ECB = 3x3 | 1x1->3x3 | 1x1->Sobel-x | 1x1->Sobel-y | 1x1->Laplacian; "
            "fuses to one 3x3 conv.",
            {"channels": 8, "blocks": 1, "ecb_mid_mult": 2},
            _rcbsr,
            _rcbsr_params,
            _rcbsr_fused_params,
        ),
        ArchCard(
            "fighter",
            "Fighter",
            "depthwise 3x3 (3) + pointwise 3->8 + ReLU, depthwise 3x3 (8) + pointwise 8->8 + ReLU, "
            "residual add from first block output, conv3x3 8->48, pixel shuffle 4.",
            {"channels": 8},
            _fighter,
            _fighter_params,
        ),
        ArchCard(
            "xjtu",
            "XJTU-MIGU SUPER",
            "conv3x3 3->16, conv3x3 16->16 + ReLU, conv3x3 16->16 + ReLU, conv3x3 16->48, "
            "pixel shuffle 4.",
            {"channels": 16},
            _xjtu,
            _xjtu_params,
        ),
        ArchCard(
            "boe",
            "BOE-IOT-AIBD",
            "conv3x3 3->25 + ReLU, 3 x conv3x3 25->25 + ReLU, conv3x3 25->25 (distillation tap), "
            "transposed conv 4x4 stride 4 25->25, conv3x3 25->3 + ReLU.",
            {"channels": 25},
            _boe,
            _boe_params,
        ),
        ArchCard(
            "genmedia",
            "GenMedia Group",
            "conv3x3 3->28 + ReLU, 2 x conv3x3 28->28 + ReLU, skip add from first features, "
            "conv3x3 28->48, concat with 16x repeated input anchor, conv1x1 96->48, "
            "clip [0,1], then pixel shuffle 4.",
            {"channels": 28, "depth": 2},
            _genmedia,
            _genmedia_params,
        ),
        ArchCard(
            "ncut",
            "NCUT VGroup",
            "conv3x3 3->C + ReLU, conv3x3 C->C + ReLU, conv3x3 C->48, pixel shuffle 4 (C=28).",
            {"channels": 28},
            _ncut,
            _ncut_params,
        ),
        ArchCard(
            "mortar",
            "Mortar ICT",
            "8 conv3x3 layers (3->32, 6 x 32->32, 32->48) with ReLU between, pixel shuffle 4. "
            "Each 3x3 is trained with a parallel 1x1 branch and fused for inference.",
            {"channels": 32, "layers": 8},
            _mortar,
            _mortar_params,
            _mortar_fused_params,
        ),
        ArchCard(
            "redcat",
            "RedCat AutoX",
            "concat(x_t, x_t+1, h_t-1) -> conv3x3 + ReLU -> 5 IMDB-lite blocks (8 ch) = h_t -> "
            "conv3x3 8->48 -> pixel shuffle 4, plus bilinear x4 of x_t. IMDB-lite: three "
            "conv stages splitting channels 1:1 into distilled/remaining, concat of the "
            "distilled parts, 1x1 fuse, residual add.",
            {"channels": 8, "blocks": 5},
            _redcat,
            _redcat_params,
        ),
        ArchCard(
            "team221b",
            "221B",
            "forward group concat(x_t-1, x_t, h_fwd) and backward group concat(x_t+1, x_t, h_bwd), "
            "each through 2 conv3x3 + ReLU (16 ch) giving the new hidden state; concat -> conv3x3 "
            "32->16 + ReLU -> conv3x3 16->48 -> pixel shuffle 4, plus bilinear x4 of x_t.",
            {"channels": 16},
            _team221b,
            _team221b_params,
        ),
    ]
}


def resolve_config(arch_id: str, config=None) -> dict:
    if arch_id not in CARDS:
        raise GraphError(f"unknown arch {arch_id!r}; choose from {', '.join(ARCH_IDS)}")
    cfg = dict(CARDS[arch_id].defaults)
    for k, v in (config or {}).items():
        if k == "seed" or k == "init":
            continue
        if k not in cfg:
            raise GraphError(f"{arch_id}: unknown config key {k!r}")
        cfg[k] = v
    for k, v in cfg.items():
        if not isinstance(v, int) or v < 1:
            raise GraphError(f"{arch_id}: {k} must be a positive integer, got {v!r}")
    if arch_id == "mvideosr" and cfg["scale"] not in (2, 4):
        raise GraphError("mvideosr scale must be 2 or 4")
    return cfg


def build_model(arch_id: str, config=None) -> ModelGraph:
    """Build and initialise one zoo model.

    ``config`` overrides the card defaults; the extra keys ``init`` (scheme)
    and ``seed`` control weight initialisation (default uniform-fan-in, 0).
    """
    from .init import init_weights

    cfg = resolve_config(arch_id, config)
    g = CARDS[arch_id].build(cfg)
    config = config or {}
    return init_weights(g, config.get("init", "uniform-fan-in"), config.get("seed", 0))


def render_cards() -> str:
    """Markdown rendering of every card (the docs file)."""
    lines = ["# Architecture cards", ""]
    for arch in ARCH_IDS:
        card = CARDS[arch]
        lines.append(f"## {arch} ({card.team})")
        lines.append("")
        lines.append(card.summary)
        lines.append("")
        lines.append(f"- defaults: {card.defaults}")
        lines.append(f"- parameters (as built): {card.expected_params()}")
        if card.fused_count:
            lines.append(f"- parameters (fused): {card.expected_fused_params()}")
        lines.append("")
    return "\n".join(lines)
