"""The ten challenge architectures as executable graphs."""
from .archs import ARCH_IDS, CARDS, ArchCard, build_model, render_cards, resolve_config
from .graph import (
    EDGE_KERNELS,
    Branch,
    GraphError,
    LayerNode,
    ModelGraph,
    count_macs,
    forward_model,
    forward_recurrent,
    frame_slots,
    infer_shapes,
    param_count,
    run_graph,
    run_sequence,
    window_at,
    zero_state,
)
from .init import (
    describe,
    fixed_sequence,
    init_weights,
    repeat_index,
    repeat_weights_2x_to_4x,
    transfer_2x_to_4x,
)

__all__ = [
    "ARCH_IDS",
    "CARDS",
    "EDGE_KERNELS",
    "ArchCard",
    "Branch",
    "GraphError",
    "LayerNode",
    "ModelGraph",
    "build_model",
    "count_macs",
    "describe",
    "fixed_sequence",
    "forward_model",
    "forward_recurrent",
    "frame_slots",
    "infer_shapes",
    "init_weights",
    "param_count",
    "render_cards",
    "repeat_index",
    "repeat_weights_2x_to_4x",
    "resolve_config",
    "run_graph",
    "run_sequence",
    "transfer_2x_to_4x",
    "window_at",
    "zero_state",
]
