"""Tape-based reverse-mode differentiation over the kernels in :mod:`kernels`."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np

from .kernels import KERNELS


class TapeError(RuntimeError):
    """The tape is inconsistent with the values it recorded."""


class Var:
    """A value living on a tape. Identity (not value) is the gradient key."""

    __slots__ = ("data", "requires_grad", "name")

    def __init__(self, data: np.ndarray, requires_grad: bool = False, name: str | None = None):
        self.data = data
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Var({self.name or ''} shape={self.data.shape} grad={self.requires_grad})"


@dataclass
class Record:
    op: str
    inputs: tuple
    attrs: dict
    output: Var
    ctx: Any


class Tape:
    """Ordered record of executed kernels.

    ``apply`` runs a kernel and appends it; ``backward`` walks the records in
    reverse accumulating vector-Jacobian products. Inputs may be plain arrays,
    which are treated as constants.
    """

    def __init__(self):
        self.records: list[Record] = []

    def __len__(self):
        return len(self.records)

    def leaf(self, data, name: str | None = None, requires_grad: bool = True) -> Var:
        return Var(np.asarray(data), requires_grad=requires_grad, name=name)

    def apply(self, op: str, *inputs, **attrs) -> Var:
        kernel = KERNELS[op]
        arrays = [v.data if isinstance(v, Var) else v for v in inputs]
        out, ctx = kernel.forward(*arrays, **attrs)
        needs_grad = kernel.backward is not None and any(
            isinstance(v, Var) and v.requires_grad for v in inputs
        )
        var = Var(out, requires_grad=needs_grad)
        self.records.append(Record(op, tuple(inputs), attrs, var, ctx))
        return var

    def replay(self) -> None:
        """Re-execute every record and check the outputs bit for bit."""
        for rec in self.records:
            arrays = [v.data if isinstance(v, Var) else v for v in rec.inputs]
            out, _ = KERNELS[rec.op].forward(*arrays, **rec.attrs)
            if out.shape != rec.output.data.shape or not np.array_equal(
                out, rec.output.data, equal_nan=True
            ):
                raise TapeError(f"replay mismatch at op {rec.op!r}")

    def backward(self, output: Var, seed=None) -> dict[Var, np.ndarray]:
        """Gradients of ``output`` wrt every ``requires_grad`` Var on the tape.

        ``seed`` defaults to ones for a scalar output and is required otherwise.
        """
        if not self.records:
            raise TapeError("backward on an empty tape")
        if seed is None:
            if output.data.size != 1:
                raise TapeError("non-scalar output needs an explicit seed gradient")
            seed = np.ones_like(output.data)
        seed = np.asarray(seed, dtype=output.data.dtype)
        if seed.shape != output.data.shape:
            raise TapeError(f"seed shape {seed.shape} != output shape {output.data.shape}")

        grads: dict[Var, np.ndarray] = {output: seed}
        for rec in reversed(self.records):
            g = grads.get(rec.output)
            if g is None or not rec.output.requires_grad:
                continue
            needs = tuple(isinstance(v, Var) and v.requires_grad for v in rec.inputs)
            in_grads = KERNELS[rec.op].backward(rec.ctx, g, needs)
            for v, gi, need in zip(rec.inputs, in_grads, needs):
                if not need or gi is None:
                    continue
                if gi.shape != v.data.shape:
                    raise TapeError(
                        f"gradient shape {gi.shape} != primal {v.data.shape} at op {rec.op!r}"
                    )
                prev = grads.get(v)
                grads[v] = gi if prev is None else prev + gi
        return grads
