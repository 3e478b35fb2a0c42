"""Fidelity metrics, runtime measurement and the challenge score / leaderboard.

PSNR and SSIM are computed on RGB values in [0, 1] over full frames with no
border crop; a sequence score is the mean of its per-frame scores.
"""
from __future__ import annotations

import csv
import io
import math
import os
import platform
import statistics
import time
from dataclasses import asdict, dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import ShapeError
from .zoo.graph import ModelGraph, count_macs, forward_model, forward_recurrent, frame_slots, zero_state

ALPHA = 1.66
BETA = 50.0
RUNTIME_LIMIT_MS = 33.0

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


# ---------------------------------------------------------------- fidelity


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"metric shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b, max_val: float = 1.0) -> float:
    """10*log10(max^2 / MSE) over every pixel; inf for identical inputs."""
    a, b = _pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(max_val * max_val / mse)


def sequence_psnr(preds, targets, max_val: float = 1.0) -> float:
    return float(np.mean([psnr(p, t, max_val) for p, t in zip(preds, targets)]))


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2
    g = np.exp(-(x * x) / (2 * sigma * sigma))
    return g / g.sum()


def _filter_valid(img, g):
    # separable valid-mode filtering of the last two axes
    rows = sliding_window_view(img, g.size, axis=-1) @ g
    return np.swapaxes(sliding_window_view(np.swapaxes(rows, -1, -2), g.size, axis=-1) @ g, -1, -2)


def ssim_map(a, b, data_range: float = 1.0) -> np.ndarray:
    a, b = _pair(a, b)
    if a.shape[-1] < SSIM_WINDOW or a.shape[-2] < SSIM_WINDOW:
        raise ShapeError(f"image {a.shape[-2:]} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    g = gaussian_window()
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    mu_a = _filter_valid(a, g)
    mu_b = _filter_valid(b, g)
    var_a = _filter_valid(a * a, g) - mu_a * mu_a
    var_b = _filter_valid(b * b, g) - mu_b * mu_b
    cov = _filter_valid(a * b, g) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return num / den


def ssim(a, b, data_range: float = 1.0) -> float:
    """Mean SSIM, 11x11 Gaussian window (sigma 1.5), per channel then averaged."""
    return float(np.mean(ssim_map(a, b, data_range)))


def evaluate_dataset(g: ModelGraph, idx, split: str = "val", with_ssim: bool = True) -> tuple[float, float | None]:
    """Mean per-frame PSNR (and SSIM) over a split; outputs clipped to [0, 1]."""
    from .zoo.graph import run_sequence

    ps, ss = [], []
    for seq in idx.split(split):
        frames = [idx.load(seq, t) for t in range(seq.n_frames)]
        preds = run_sequence(g, [lr for _, lr in frames])
        for pred, (hr, _) in zip(preds, frames):
            pred = np.clip(pred, 0.0, 1.0)
            ps.append(psnr(pred, hr))
            if with_ssim:
                ss.append(ssim(pred, hr))
    if not ps:
        raise ValueError(f"no {split} frames to evaluate")
    return float(np.mean(ps)), (float(np.mean(ss)) if with_ssim else None)


def bicubic_baseline(idx, split: str = "val", with_ssim: bool = True) -> tuple[float, float | None]:
    """Same protocol as evaluate_dataset with bicubic x4 upscaling as the model."""
    from .data import bicubic_upscale

    ps, ss = [], []
    for seq in idx.split(split):
        for t in range(seq.n_frames):
            hr, lr = idx.load(seq, t)
            pred = np.clip(bicubic_upscale(lr), 0.0, 1.0)
            ps.append(psnr(pred, hr))
            if with_ssim:
                ss.append(ssim(pred, hr))
    return float(np.mean(ps)), (float(np.mean(ss)) if with_ssim else None)


# ---------------------------------------------------------------- efficiency


def host_descriptor() -> str:
    return f"{platform.machine()} {platform.processor() or platform.system()} cpus={os.cpu_count()} numpy={np.__version__}"


def measure_runtime(g: ModelGraph, input_dims=(1, 3, 180, 320), warmup: int = 2, iters: int = 20, seed: int = 0) -> float:
    """Median wall-clock milliseconds of ``iters`` forward passes after ``warmup``.

    Host numbers; not comparable with on-device NPU timings.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    x = np.random.default_rng(seed).random(input_dims, dtype=np.float32)
    if g.recurrent:
        n, _, h, w = input_dims
        state = zero_state(g, n, h, w)
        window = [x] * len(frame_slots(g))

        def step():
            forward_recurrent(g, window, state)

    else:

        def step():
            forward_model(g, x)

    for _ in range(warmup):
        step()
    times = []
    for _ in range(iters):
        t0 = time.perf_counter()
        step()
        times.append((time.perf_counter() - t0) * 1000.0)
    return float(statistics.median(times))


# ---------------------------------------------------------------- scoring


def challenge_score(psnr_db: float, power_w: float, runtime_ms: float | None = None, enforce_runtime: bool = True) -> float:
    """1.66 * PSNR + 50 * (1 - power); zero when the 33 ms budget is blown.

    Power is not clamped: a solution drawing more than 1 W scores negative.
    """
    if power_w < 0:
        raise ValueError("power must be non-negative")
    if enforce_runtime and runtime_ms is not None and runtime_ms > RUNTIME_LIMIT_MS:
        return 0.0
    return ALPHA * psnr_db + BETA * (1.0 - power_w)


@dataclass
class MetricsRecord:
    model_id: str
    psnr: float
    ssim: float | None = None
    runtime_ms: float | None = None
    power_w: float | None = None
    param_count: int | None = None
    macs: int | None = None
    model_bytes: int | None = None

    @property
    def energy_proxy(self) -> float | None:
        """macs * runtime_ms. A host-side stand-in, not the challenge's power metric."""
        if self.macs is None or self.runtime_ms is None:
            return None
        return self.macs * self.runtime_ms


@dataclass
class ScoreRecord:
    metrics: MetricsRecord
    final_score: float

    @classmethod
    def from_metrics(cls, m: MetricsRecord, enforce_runtime: bool = True) -> "ScoreRecord":
        if m.power_w is None:
            raise ValueError(f"{m.model_id}: power is required for scoring")
        return cls(m, challenge_score(m.psnr, m.power_w, m.runtime_ms, enforce_runtime))


def leaderboard(records) -> list[ScoreRecord]:
    """Sort by final score, best first; ties broken by model id."""
    return sorted(records, key=lambda r: (-r.final_score, r.metrics.model_id))


COLUMNS = ("Team", "Size, KB", "PSNR", "SSIM", "Runtime, ms", "Power, W@30FPS", "Final Score")


def _fmt(v, spec):
    if v is None:
        return "-"
    if isinstance(v, float) and math.isinf(v):
        return "inf"
    return format(v, spec)


def _row(r: ScoreRecord):
    m = r.metrics
    kb = None if m.model_bytes is None else m.model_bytes / 1024
    return (
        m.model_id,
        _fmt(kb, ".0f"),
        _fmt(m.psnr, ".2f"),
        _fmt(m.ssim, ".4f"),
        _fmt(m.runtime_ms, ".2f"),
        _fmt(m.power_w, ".2f"),
        _fmt(r.final_score, ".2f"),
    )


def render_table(rows) -> str:
    """Aligned text table with the leaderboard column set."""
    body = [COLUMNS] + [_row(r) for r in rows]
    widths = [max(len(line[i]) for line in body) for i in range(len(COLUMNS))]
    out = []
    for k, line in enumerate(body):
        cells = [line[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(line[1:], widths[1:])]
        out.append("  ".join(cells).rstrip())
        if k == 0:
            out.append("  ".join("-" * w for w in widths))
    return "\n".join(out) + "\n"


def render_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS)
    for r in rows:
        writer.writerow(_row(r))
    return buf.getvalue()


# Published final results: team, model size KB, PSNR, SSIM, runtime ms, power W, final score.
TABLE1 = (
    ("MVideoSR", 17, 27.34, 0.7799, 3.05, 0.09, 90.9),
    ("ZX_VIP", 20, 27.52, 0.7872, 3.04, 0.10, 90.7),
    ("Fighter", 11, 27.34, 0.7816, 3.41, 0.20, 85.4),
    ("XJTU-MIGU SUPER", 50, 27.77, 0.7957, 3.25, 0.22, 85.1),
    ("BOE-IOT-AIBD", 40, 27.71, 0.7820, 1.97, 0.24, 84.0),
    ("GenMedia Group", 135, 28.40, 0.8105, 3.10, 0.33, 80.6),
    ("NCUT VGroup", 35, 27.46, 0.7822, 1.39, 0.40, 75.6),
    ("Mortar ICT", 75, 22.91, 0.7546, 1.76, 0.36, 70.0),
    ("RedCat AutoX", 62, 27.71, 0.7945, 7.26, 0.53, 69.5),
    ("221B", 186, 28.19, 0.8093, 10.1, 0.80, 56.8),
    ("SuperDash", 1810, 28.45, 0.8171, 26.8, 3.73, -89.3),
)
BICUBIC_BASELINE_PSNR = 26.50


def table1_records() -> list[MetricsRecord]:
    return [
        MetricsRecord(team, p, s, rt, pw, model_bytes=kb * 1024)
        for team, kb, p, s, rt, pw, _ in TABLE1
    ]


def record_dict(r: ScoreRecord) -> dict:
    d = asdict(r.metrics)
    d["final_score"] = r.final_score
    return d
