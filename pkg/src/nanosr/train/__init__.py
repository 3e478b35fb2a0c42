"""Losses, Adam, schedules and multi-stage training recipes."""
from .losses import CHARBONNIER_EPS, LOSS_KINDS, distill_loss, loss, make_adapter
from .loop import TrainingError, TrainLog, draw_batch, run_recipe, run_stage
from .optim import OptimizerState, adam_step
from .recipes import DESK_DIVISOR, RECIPES, desk_stage, recipe
from .stage import Stage, StageError, cosine_at, schedule_lr

__all__ = [
    "CHARBONNIER_EPS",
    "DESK_DIVISOR",
    "LOSS_KINDS",
    "OptimizerState",
    "RECIPES",
    "Stage",
    "StageError",
    "TrainLog",
    "TrainingError",
    "adam_step",
    "cosine_at",
    "desk_stage",
    "distill_loss",
    "draw_batch",
    "loss",
    "make_adapter",
    "recipe",
    "run_recipe",
    "run_stage",
    "schedule_lr",
]
