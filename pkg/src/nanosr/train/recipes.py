"""Published training recipes for every zoo model, plus desk-scale variants.

Epoch counts are converted with REDS_TRAIN_FRAMES / batch iterations per
epoch (one patch per training frame per epoch). Values a team did not report
use the DEFAULT_* constants below.
"""
from __future__ import annotations

from .stage import Stage

REDS_TRAIN_FRAMES = 240 * 100
DEFAULT_BATCH = 16
DEFAULT_PATCH = 64

DESK_DIVISOR = 500
DESK_MAX_BATCH = 16
DESK_MAX_PATCH = 64


def epochs(n: float, batch: int) -> int:
    return int(round(n * REDS_TRAIN_FRAMES / batch))


def _every(step: int, total: int) -> tuple[int, ...]:
    return tuple(range(step, total, step))


def _mvideosr():
    common = dict(batch=64, patch=256, loss="l1", schedule="multistep")
    return [
        Stage(500_000, 5e-4, milestones=(200_000, 400_000), scale=2, note="x2 from scratch", **common),
        Stage(500_000, 5e-5, milestones=(100_000, 300_000, 450_000), warm_start="from-2x-repetition", note="x4 from repeated x2 weights", **common),
        Stage(500_000, 2e-4, milestones=(200_000,), note="x4 restart", **common),
        Stage(1_000_000, 2e-4, milestones=(300_000, 600_000, 900_000), batch=64, patch=256, loss="mse", schedule="multistep", note="MSE fine-tune"),
        Stage(500_000, 2e-5, milestones=(100_000, 200_000, 300_000, 400_000), batch=64, patch=512, loss="mse", schedule="multistep", note="512 patches"),
        Stage(50_000, 2e-5, batch=64, patch=640, loss="mse", note="640 patches"),
    ]


def _rcbsr():
    n = epochs(4000, 64)
    return [
        Stage(n, 5e-4, loss="charbonnier", schedule="multistep", milestones=_every(epochs(1000, 64), n), batch=64, patch=512, flips=True, rotations=True),
        # second-stage length and schedule are unreported; one 1000-epoch pass at constant lr
        Stage(epochs(1000, 64), 2e-4, loss="mse", batch=64, patch=512, flips=True, rotations=True),
    ]


def _fighter():
    n = epochs(1500, DEFAULT_BATCH)
    return [Stage(n, 1e-2, loss="l1", schedule="multistep", milestones=_every(epochs(240, DEFAULT_BATCH), n))]


def _xjtu():
    # lr values are kept exactly as reported, including the large 0.12 phase
    return [
        Stage(epochs(200, 4), 1.6e-2, loss="l1", batch=4),
        Stage(epochs(800, 64), 0.12, loss="l1", batch=64),
        Stage(epochs(1600, 4), 0.12, loss="l1", batch=4, note="lr not reported; last value kept"),
    ]


def _boe():
    # iteration count unreported
    return [Stage(100_000, 1e-4, loss="mse", batch=4, patch=(60, 80), distill_lambda=1.0)]


def _genmedia():
    n = epochs(1000, 32)
    return [Stage(n, 1e-3, loss="l1", schedule="multistep", milestones=_every(epochs(200, 32), n), batch=32, patch=96, flips=True)]


def _ncut():
    return [Stage(168_000, 1e-3, loss="l1", schedule="cosine", lr_min=1e-8, batch=16, patch=64, flips=True)]


def _mortar():
    n = epochs(100, DEFAULT_BATCH)
    return [Stage(n, 5e-4, loss="l1", schedule="multistep", milestones=_every(epochs(30, DEFAULT_BATCH), n), batch=DEFAULT_BATCH, patch=64)]


def _redcat():
    # halving every 15K steps over 150K iterations: nine milestones, as written
    return [Stage(150_000, 3e-3, loss="l1", schedule="multistep", milestones=_every(15_000, 150_000), batch=8, patch=DEFAULT_PATCH, flips=True)]


def _team221b():
    return [Stage(150_000, 1e-3, loss="charbonnier", schedule="multistep", milestones=(50_000, 100_000), batch=16, patch=64)]


RECIPES = {
    "mvideosr": _mvideosr,
    "rcbsr": _rcbsr,
    "fighter": _fighter,
    "xjtu": _xjtu,
    "boe": _boe,
    "genmedia": _genmedia,
    "ncut": _ncut,
    "mortar": _mortar,
    "redcat": _redcat,
    "team221b": _team221b,
}


def _cap_patch(p):
    if isinstance(p, int):
        return min(p, DESK_MAX_PATCH)
    return tuple(min(v, DESK_MAX_PATCH) for v in p)


def desk_stage(s: Stage, divisor: int = DESK_DIVISOR) -> Stage:
    """Iterations and milestones / divisor; batch and patch capped for one CPU core."""
    iters = max(1, s.iterations // divisor)
    ms = sorted({m // divisor for m in s.milestones if 0 < m // divisor < iters})
    return s.replace(
        iterations=iters,
        milestones=tuple(ms),
        cosine_t=None if s.cosine_t is None else max(1, s.cosine_t // divisor),
        batch=min(s.batch, DESK_MAX_BATCH),
        patch=_cap_patch(s.patch),
    )


def recipe(arch_id: str, desk: bool = False) -> list[Stage]:
    if arch_id not in RECIPES:
        raise KeyError(f"no recipe for {arch_id!r}")
    stages = RECIPES[arch_id]()
    return [desk_stage(s) for s in stages] if desk else stages
