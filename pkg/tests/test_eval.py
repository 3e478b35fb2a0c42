import math
import random

import numpy as np
import pytest

from nanosr import eval as ev
from nanosr.tensor import ShapeError
from nanosr.zoo import LayerNode, ModelGraph, build_model, count_macs


def psnr_loop(a, b):
    total, n = 0.0, 0
    for x, y in zip(np.ravel(a), np.ravel(b)):
        total += (float(x) - float(y)) ** 2
        n += 1
    return 10 * math.log10(1.0 / (total / n))


def ssim_loop(a, b):
    """Direct sliding-window SSIM: explicit 2-D Gaussian window per position."""
    g1 = np.array([math.exp(-((i - 5) ** 2) / (2 * 1.5**2)) for i in range(11)])
    win = np.outer(g1, g1)
    win /= win.sum()
    c1, c2 = 0.01**2, 0.03**2
    vals = []
    for ch in range(a.shape[1]):
        x, y = a[0, ch].astype(np.float64), b[0, ch].astype(np.float64)
        for i in range(x.shape[0] - 10):
            for j in range(x.shape[1] - 10):
                px, py = x[i : i + 11, j : j + 11], y[i : i + 11, j : j + 11]
                mx, my = (win * px).sum(), (win * py).sum()
                vx = (win * (px - mx) ** 2).sum()
                vy = (win * (py - my) ** 2).sum()
                cov = (win * (px - mx) * (py - my)).sum()
                vals.append(((2 * mx * my + c1) * (2 * cov + c2)) / ((mx**2 + my**2 + c1) * (vx + vy + c2)))
    return float(np.mean(vals))


def test_psnr_identical_is_inf():
    a = np.random.default_rng(0).random((1, 3, 4, 4))
    assert ev.psnr(a, a) == math.inf


def test_psnr_40db_case():
    a = np.zeros((1, 3, 10, 10))
    assert ev.psnr(a, a + 0.01) == pytest.approx(40.0, abs=1e-9)


def test_psnr_matches_loop(rng):
    for _ in range(5):
        a, b = rng.random((1, 3, 8, 8)), rng.random((1, 3, 8, 8))
        assert abs(ev.psnr(a, b) - psnr_loop(a, b)) <= 1e-6


def test_psnr_shape_mismatch():
    with pytest.raises(ShapeError):
        ev.psnr(np.zeros((1, 3, 4, 4)), np.zeros((1, 3, 4, 5)))


def test_psnr_monotone_in_noise(rng):
    a = rng.random((1, 3, 16, 16))
    noise = rng.standard_normal(a.shape)
    vals = [ev.psnr(a, a + s * noise) for s in (0.01, 0.02, 0.05, 0.1, 0.2)]
    assert all(x > y for x, y in zip(vals, vals[1:]))


def test_metrics_symmetric(rng):
    a, b = rng.random((1, 3, 12, 12)), rng.random((1, 3, 12, 12))
    assert ev.psnr(a, b) == ev.psnr(b, a)
    assert ev.ssim(a, b) == pytest.approx(ev.ssim(b, a), abs=1e-15)


def test_ssim_identical_exactly_one(rng):
    a = rng.random((1, 3, 20, 17))
    assert ev.ssim(a, a) == 1.0


def test_ssim_constant_images_closed_form():
    c1 = 0.01**2
    assert ev.ssim(np.zeros((1, 3, 11, 11)), np.ones((1, 3, 11, 11))) == pytest.approx(c1 / (1 + c1), rel=1e-9)


def test_ssim_matches_window_oracle(rng):
    for _ in range(2):
        a, b = rng.random((1, 3, 14, 13)), rng.random((1, 3, 14, 13))
        assert abs(ev.ssim(a, b) - ssim_loop(a, b)) <= 1e-6


def test_ssim_too_small():
    with pytest.raises(ShapeError):
        ev.ssim(np.zeros((1, 3, 10, 20)), np.zeros((1, 3, 10, 20)))


def test_sequence_psnr_is_mean_of_frames(rng):
    a = [rng.random((1, 3, 4, 4)) for _ in range(3)]
    b = [rng.random((1, 3, 4, 4)) for _ in range(3)]
    assert ev.sequence_psnr(a, b) == pytest.approx(np.mean([ev.psnr(x, y) for x, y in zip(a, b)]))


def test_single_conv_macs():
    g = ModelGraph("one", (LayerNode("c", "conv", ("frame",), ("w", "b"), {"padding": 1}),), {"w": np.zeros((6, 3, 3, 3)), "b": np.zeros(6)}, outputs={"sr": "c"})
    assert count_macs(g, (1, 3, 10, 7)) == 162 * 70


def test_shuffle_only_graph_has_no_macs():
    g = ModelGraph("s", (LayerNode("s", "pixel_shuffle", ("frame",), (), {"r": 1}),), {}, outputs={"sr": "s"})
    assert count_macs(g, (1, 3, 10, 10)) == 0


def test_mvideosr_macs_hand_sum():
    hw = 180 * 320
    expected = 9 * hw * (3 * 6 + 6 * 6 + 6 * 6 + 6 * 48)
    assert count_macs(build_model("mvideosr"), (1, 3, 180, 320)) == expected


def test_measure_runtime_requires_iterations():
    with pytest.raises(ValueError):
        ev.measure_runtime(build_model("xjtu"), (1, 3, 8, 8), iters=0)


def test_measure_runtime_positive_and_stable():
    g = build_model("xjtu")
    a = ev.measure_runtime(g, (1, 3, 45, 80), warmup=1, iters=9)
    b = ev.measure_runtime(g, (1, 3, 45, 80), warmup=1, iters=9)
    assert a > 0 and b > 0
    assert abs(a - b) / max(a, b) < 0.5


def test_measure_runtime_recurrent():
    assert ev.measure_runtime(build_model("redcat"), (1, 3, 8, 8), warmup=0, iters=2) > 0


@pytest.mark.parametrize(
    "psnr,power,runtime,expected",
    [(27.34, 0.09, 3.05, 90.8844), (28.45, 3.73, 26.8, -89.273)],
)
def test_score_examples(psnr, power, runtime, expected):
    assert ev.challenge_score(psnr, power, runtime) == pytest.approx(expected, abs=1e-9)


def test_runtime_gate():
    assert ev.challenge_score(28.0, 0.1, 40.0) == 0.0
    assert ev.challenge_score(28.0, 0.1, 40.0, enforce_runtime=False) == pytest.approx(1.66 * 28 + 45)
    assert ev.challenge_score(28.0, 0.1, 33.0) > 0  # the limit itself passes


def test_negative_power_rejected():
    with pytest.raises(ValueError):
        ev.challenge_score(28.0, -0.1, 3.0)


def test_score_is_linear():
    h = 1e-3
    d_psnr = (ev.challenge_score(27 + h, 0.2) - ev.challenge_score(27 - h, 0.2)) / (2 * h)
    d_power = (ev.challenge_score(27, 0.2 + h) - ev.challenge_score(27, 0.2 - h)) / (2 * h)
    assert d_psnr == pytest.approx(1.66, abs=1e-8)
    assert d_power == pytest.approx(-50.0, abs=1e-8)


def test_table_rows_within_tolerance():
    for team, _, p, _, rt, pw, final in ev.TABLE1:
        assert abs(ev.challenge_score(p, pw, rt) - final) <= 0.05, team


def test_leaderboard_order_matches_table():
    rows = ev.leaderboard([ev.ScoreRecord.from_metrics(m) for m in ev.table1_records()])
    assert [r.metrics.model_id for r in rows] == [t[0] for t in ev.TABLE1]


def test_leaderboard_permutation_invariant():
    recs = [ev.ScoreRecord.from_metrics(m) for m in ev.table1_records()]
    shuffled = recs[:]
    random.Random(3).shuffle(shuffled)
    assert ev.render_table(ev.leaderboard(recs)) == ev.render_table(ev.leaderboard(shuffled))


def test_tie_broken_by_id():
    a = ev.ScoreRecord(ev.MetricsRecord("b", 27.0), 80.0)
    b = ev.ScoreRecord(ev.MetricsRecord("a", 27.0), 80.0)
    assert [r.metrics.model_id for r in ev.leaderboard([a, b])] == ["a", "b"]


def test_empty_table_is_header_only():
    text = ev.render_table([])
    assert text.splitlines()[0].startswith("Team")
    assert len(text.splitlines()) == 2
    assert ev.render_csv([]).count("\n") == 1


def test_scoring_needs_power():
    with pytest.raises(ValueError):
        ev.ScoreRecord.from_metrics(ev.MetricsRecord("x", 27.0))


def test_energy_proxy():
    m = ev.MetricsRecord("x", 27.0, runtime_ms=2.0, macs=10)
    assert m.energy_proxy == 20.0
    assert ev.MetricsRecord("y", 27.0).energy_proxy is None


def test_dataset_evaluation_identity_model(tiny_desk):
    """A model that returns bicubic output must score exactly the bicubic baseline."""
    from nanosr.data import bicubic_upscale

    class Fake:
        recurrent = False

    import nanosr.zoo.graph as G

    def fake_run(g, frames):
        return [bicubic_upscale(f) for f in frames]

    orig = G.run_sequence
    G.run_sequence = fake_run
    try:
        got = ev.evaluate_dataset(Fake(), tiny_desk, "val")
    finally:
        G.run_sequence = orig
    assert got == ev.bicubic_baseline(tiny_desk, "val")
