"""Training stage description and learning-rate schedules."""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Any

from .losses import CHARBONNIER_EPS, LOSS_KINDS

SCHEDULES = ("multistep", "cosine", "constant")
WARM_STARTS = (None, "from-2x-repetition", "from-checkpoint")


class StageError(ValueError):
    pass


@dataclass(frozen=True)
class Stage:
    iterations: int
    lr: float
    loss: str = "l1"
    schedule: str = "constant"
    milestones: tuple[int, ...] = ()
    factor: float = 0.5
    cosine_t: int | None = None  # defaults to iterations
    lr_min: float = 0.0
    batch: int = 16
    patch: Any = 64  # HR patch, int or (h, w)
    flips: bool = False
    rotations: bool = False
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    charbonnier_eps: float = CHARBONNIER_EPS
    warm_start: str | None = None
    checkpoint: str | None = None
    scale: int = 4  # 2 trains the x2 variant of an arch that supports it
    distill_lambda: float | None = None  # set to enable teacher distillation
    clip_len: int = 3  # frames per clip for recurrent models
    log_every: int = 10
    note: str = ""

    def __post_init__(self):
        if self.iterations <= 0:
            raise StageError(f"iterations must be > 0, got {self.iterations}")
        if self.lr <= 0:
            raise StageError("initial learning rate must be positive")
        if self.loss not in LOSS_KINDS:
            raise StageError(f"unknown loss {self.loss!r}")
        if self.schedule not in SCHEDULES:
            raise StageError(f"unknown schedule {self.schedule!r}")
        ms = tuple(int(m) for m in self.milestones)
        if any(b <= a for a, b in zip(ms, ms[1:])):
            raise StageError(f"milestones must be strictly increasing: {ms}")
        object.__setattr__(self, "milestones", ms)
        if isinstance(self.patch, list):
            object.__setattr__(self, "patch", tuple(self.patch))
        if self.warm_start not in WARM_STARTS:
            raise StageError(f"unknown warm start {self.warm_start!r}")
        if self.warm_start == "from-checkpoint" and not self.checkpoint:
            raise StageError("from-checkpoint needs a checkpoint path")
        if self.batch < 1 or self.clip_len < 1 or self.log_every < 1:
            raise StageError("batch, clip_len and log_every must be >= 1")

    @property
    def period(self) -> int:
        return self.cosine_t or self.iterations

    def replace(self, **changes) -> "Stage":
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_dict(cls, d: dict) -> "Stage":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise StageError(f"unknown stage keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["milestones"] = list(self.milestones)
        if isinstance(self.patch, tuple):
            d["patch"] = list(self.patch)
        return d


def schedule_lr(stage: Stage, step: int) -> float:
    if not 0 <= step < stage.iterations:
        raise StageError(f"step {step} outside [0, {stage.iterations})")
    if stage.schedule == "constant":
        return stage.lr
    if stage.schedule == "multistep":
        passed = sum(step >= m for m in stage.milestones)
        return stage.lr * stage.factor**passed
    return cosine_at(stage, step)


def cosine_at(stage: Stage, step: int) -> float:
    """Cosine value without the range check, so step == T can be inspected."""
    t = min(step, stage.period)
    return stage.lr_min + (stage.lr - stage.lr_min) * (1 + math.cos(math.pi * t / stage.period)) / 2
