"""Deterministic training loop: stages, recipes, warm starts."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .. import data as D
from ..tensor.autograd import Tape
from ..zoo import build_model, run_graph
from ..zoo.graph import ModelGraph, frame_slots, window_at
from ..zoo.init import transfer_2x_to_4x
from .losses import make_adapter, record_distill, record_loss
from .optim import OptimizerState, adam_step
from .stage import Stage, StageError, schedule_lr

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainLog:
    records: list = field(default_factory=list)  # (step, lr, loss)

    def add(self, step, lr, loss):
        self.records.append((int(step), float(lr), float(loss)))

    def lines(self) -> list[str]:
        return [f"{s}, {lr:.6e}, {v:.6f}" for s, lr, v in self.records]

    @property
    def losses(self):
        return [v for _, _, v in self.records]


def _stack(arrays):
    return np.ascontiguousarray(np.concatenate(arrays, axis=0), dtype=np.float32)


def _downscale(hr, factor):
    h, w = hr.shape[2:]
    return D.bicubic_resize(hr, h // factor, w // factor).astype(np.float32)


def draw_batch(source, stage: Stage, rng: np.random.Generator, recurrent: bool):
    """Return (inputs, targets); clips give lists over time of (B, 3, h, w) arrays.

    ``source`` is a DatasetIndex or a fixed list of PatchPair / ClipPair.
    """
    seed = int(rng.integers(2**63))
    if isinstance(source, D.DatasetIndex):
        if recurrent:
            items = D.sample_clips(source, stage.patch, stage.batch, seed, stage.clip_len)
        else:
            items = D.sample_patches(source, stage.patch, stage.batch, seed)
    else:
        pool = list(source)
        if not pool:
            raise TrainingError("empty training data")
        items = [pool[int(i)] for i in rng.integers(len(pool), size=stage.batch)]
    if stage.flips or stage.rotations:
        items = [D.random_augment(it, rng, stage.flips, stage.rotations) for it in items]
    if recurrent:
        if not isinstance(items[0], D.ClipPair):
            raise TrainingError("recurrent models train on ClipPair data")
        steps = len(items[0].lr)
        lr = [_stack([it.lr[t] for it in items]) for t in range(steps)]
        hr = [_stack([it.hr[t] for it in items]) for t in range(steps)]
        if stage.scale != 4:
            lr = [_downscale(h, stage.scale) for h in hr]
        return lr, hr
    hr = _stack([it.hr for it in items])
    lr = _stack([it.lr for it in items]) if stage.scale == 4 else _downscale(hr, stage.scale)
    return lr, hr


def _feature_tap(g: ModelGraph) -> str:
    return g.taps.get("distill", g.taps.get("features"))


def _sr_loss(tape, g, vals, target, stage, teacher, adapter, x):
    out = vals[g.outputs["sr"]]
    if teacher is None:
        return record_loss(tape, out, target, stage.loss, stage.charbonnier_eps)
    t_vals = run_graph(teacher, {"frame": x})
    return record_distill(
        tape,
        out,
        t_vals[teacher.outputs["sr"]],
        vals[_feature_tap(g)],
        t_vals[_feature_tap(teacher)],
        stage.distill_lambda,
        adapter,
    )


def _loss_and_grads(g, params, inputs, targets, stage, teacher, adapter):
    tape = Tape()
    leaves = {k: tape.leaf(v, k) for k, v in params.items()}
    if not g.recurrent:
        vals = run_graph(g, {"frame": inputs}, tape, leaves)
        total = _sr_loss(tape, g, vals, targets, stage, teacher, adapter, inputs)
    else:
        # truncated BPTT over the clip from a zero state
        slots = frame_slots(g)
        n, _, h, w = inputs[0].shape
        state = {s: np.zeros((n, c, h, w), np.float32) for s, c in g.state.items()}
        total = None
        for t in range(len(inputs)):
            feeds = dict(zip(slots, window_at(inputs, t, slots)))
            feeds.update(state)
            vals = run_graph(g, feeds, tape, leaves)
            lt = record_loss(tape, vals[g.outputs["sr"]], targets[t], stage.loss, stage.charbonnier_eps)
            total = lt if total is None else tape.apply("add", total, lt)
            state = {s: vals[g.outputs[s]] for s in g.state}
        total = tape.apply("scale", total, factor=1.0 / len(inputs))
    grads = tape.backward(total)
    return float(total.data), {k: grads.get(leaf) for k, leaf in leaves.items()}


def run_stage(g: ModelGraph, stage: Stage, data, seed: int = 0, teacher: ModelGraph | None = None, stage_index: int = 0):
    """Train ``g`` for one stage. Returns (trained graph, TrainLog).

    Batches come from a generator seeded by (seed, stage_index, step), so a
    run is a pure function of its inputs.
    """
    if stage.iterations <= 0:
        raise StageError("iterations must be > 0")
    if stage.distill_lambda is not None and teacher is None:
        raise TrainingError("stage asks for distillation but no teacher graph was given")
    if teacher is not None and g.recurrent:
        raise TrainingError("distillation is only defined for single-frame students")
    adapter = None
    if teacher is not None:
        probe = np.zeros((1, 3, 8, 8), np.float32)
        cs = run_graph(g, {"frame": probe})[_feature_tap(g)].shape[1]
        ct = run_graph(teacher, {"frame": probe})[_feature_tap(teacher)].shape[1]
        adapter = make_adapter(cs, ct, seed)
    params = dict(g.params)
    opt = OptimizerState.zeros_like(params)
    tlog = TrainLog()
    for step in range(stage.iterations):
        rng = np.random.default_rng([seed, stage_index, step])
        inputs, targets = draw_batch(data, stage, rng, g.recurrent)
        lr = schedule_lr(stage, step)
        value, grads = _loss_and_grads(g, params, inputs, targets, stage, teacher, adapter)
        if not math.isfinite(value):
            raise TrainingError(f"non-finite loss {value} at step {step} (lr {lr:.3e}); aborting")
        params, opt = adam_step(params, grads, opt, lr, stage.beta1, stage.beta2, stage.eps_adam)
        if step % stage.log_every == 0 or step == stage.iterations - 1:
            tlog.add(step, lr, value)
            log.debug("step %d lr %.3e loss %.6f", step, lr, value)
    return g.with_params(params), tlog


def _resolve_start(arch_id, prev, stage: Stage, config, seed):
    from ..io import load_weights

    cfg = dict(config or {})
    cfg.setdefault("seed", seed)
    want_scale = stage.scale
    if want_scale != 4:
        if arch_id != "mvideosr":
            raise StageError(f"{arch_id} has no x{want_scale} variant")
        cfg["scale"] = want_scale
    if stage.warm_start == "from-2x-repetition":
        if prev is None or prev.scale != 2:
            raise StageError("from-2x-repetition needs a preceding x2 stage")
        return transfer_2x_to_4x(prev, build_model(arch_id, cfg))
    if stage.warm_start == "from-checkpoint":
        g = prev if prev is not None and prev.scale == want_scale else build_model(arch_id, cfg)
        return load_weights(stage.checkpoint, g)
    if prev is None:
        return build_model(arch_id, cfg)
    if prev.scale != want_scale:
        raise StageError(f"cannot continue an x{prev.scale} model in an x{want_scale} stage without a warm start")
    return prev


def run_recipe(arch_id: str, stages, data, seed: int = 0, config=None, teacher: ModelGraph | None = None, on_stage=None):
    """Run ``stages`` in order, each starting from the previous weights.

    Returns (final graph, list of TrainLog). ``on_stage(i, graph, log)`` is
    called after every stage.
    """
    g = None
    logs = []
    for i, stage in enumerate(stages):
        g = _resolve_start(arch_id, g, stage, config, seed)
        t = teacher if stage.distill_lambda is not None else None
        g, tlog = run_stage(g, stage, data, seed, teacher=t, stage_index=i)
        logs.append(tlog)
        if on_stage is not None:
            on_stage(i, g, tlog)
    if g is None:
        raise StageError("empty recipe")
    return g, logs
