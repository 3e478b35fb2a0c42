"""Pixel losses and output/feature distillation."""
from __future__ import annotations

import numpy as np

from ..tensor import ShapeError
from ..tensor.kernels import KERNELS

LOSS_KINDS = {"l1": "l1_loss", "mse": "mse_loss", "charbonnier": "charbonnier_loss"}
CHARBONNIER_EPS = 1e-3


def _op(kind: str) -> str:
    try:
        return LOSS_KINDS[kind.lower()]
    except KeyError:
        raise ValueError(f"unknown loss {kind!r}; choose from {', '.join(LOSS_KINDS)}") from None


def loss_attrs(kind: str, eps: float = CHARBONNIER_EPS) -> dict:
    return {"eps": eps} if _op(kind) == "charbonnier_loss" else {}


def loss(pred, target, kind: str = "l1", eps: float = CHARBONNIER_EPS):
    """(value, d value / d pred) for one of l1 | mse | charbonnier."""
    pred = np.asarray(pred)
    target = np.asarray(target, dtype=pred.dtype)
    if pred.shape != target.shape:
        raise ShapeError(f"loss shape mismatch: {pred.shape} vs {target.shape}")
    k = KERNELS[_op(kind)]
    value, ctx = k.forward(pred, target, **loss_attrs(kind, eps))
    (grad,) = k.backward(ctx, np.ones((), pred.dtype), (True, False))[:1]
    return float(value), grad


def record_loss(tape, pred, target, kind: str, eps: float = CHARBONNIER_EPS):
    """Same loss, recorded on ``tape`` (target is a constant)."""
    return tape.apply(_op(kind), pred, np.asarray(target, dtype=np.float32), **loss_attrs(kind, eps))


def make_adapter(c_student: int, c_teacher: int, seed: int = 0) -> np.ndarray | None:
    """Frozen random 1x1 projection student -> teacher channels (None when equal)."""
    if c_student == c_teacher:
        return None
    rng = np.random.default_rng(seed)
    bound = 1.0 / np.sqrt(c_student)
    return rng.uniform(-bound, bound, (c_teacher, c_student, 1, 1)).astype(np.float32)


def distill_loss(student_out, teacher_out, student_feat, teacher_feat, lam: float, adapter=None) -> float:
    """MSE(outputs) + lam * MSE(features), features projected through ``adapter`` if given."""
    s_feat = np.asarray(student_feat)
    if adapter is not None:
        s_feat = KERNELS["conv2d"].forward(s_feat, np.asarray(adapter, s_feat.dtype))[0]
    if s_feat.shape != np.shape(teacher_feat):
        raise ShapeError(f"feature mismatch after adapter: {s_feat.shape} vs {np.shape(teacher_feat)}")
    out_term, _ = loss(student_out, teacher_out, "mse")
    feat_term, _ = loss(s_feat, teacher_feat, "mse")
    return out_term + lam * feat_term


def record_distill(tape, student_out, teacher_out, student_feat, teacher_feat, lam: float, adapter=None):
    feat = student_feat if adapter is None else tape.apply("conv2d", student_feat, adapter)
    out_term = tape.apply("mse_loss", student_out, np.asarray(teacher_out, np.float32))
    if lam == 0:
        return out_term
    feat_term = tape.apply("mse_loss", feat, np.asarray(teacher_feat, np.float32))
    return tape.apply("add", out_term, tape.apply("scale", feat_term, factor=lam))
