import numpy as np
import pytest

from nanosr.tensor import ShapeError, ConvParams
from nanosr.zoo import (
    ARCH_IDS,
    CARDS,
    GraphError,
    build_model,
    count_macs,
    describe,
    fixed_sequence,
    forward_model,
    forward_recurrent,
    infer_shapes,
    param_count,
    repeat_index,
    repeat_weights_2x_to_4x,
    run_sequence,
    transfer_2x_to_4x,
    window_at,
    zero_state,
)

from test_tensor import direct_conv


def _run(g, x):
    if g.recurrent:
        return run_sequence(g, [x])[0]
    return forward_model(g, x)


@pytest.mark.parametrize("arch", ARCH_IDS)
def test_param_count_matches_card(arch):
    g = build_model(arch)
    assert param_count(g) == CARDS[arch].expected_params()


@pytest.mark.parametrize(
    "arch,cfg",
    [
        ("mvideosr", {"channels": 10}),
        ("mvideosr", {"scale": 2}),
        ("rcbsr", {"channels": 12, "blocks": 3}),
        ("fighter", {"channels": 6}),
        ("xjtu", {"channels": 8}),
        ("boe", {"channels": 9}),
        ("genmedia", {"channels": 12, "depth": 4}),
        ("ncut", {"channels": 20}),
        ("mortar", {"channels": 16, "layers": 5}),
        ("redcat", {"channels": 12, "blocks": 2}),
        ("team221b", {"channels": 8}),
    ],
)
def test_param_count_closed_form_under_config(arch, cfg):
    assert param_count(build_model(arch, cfg)) == CARDS[arch].expected_params(cfg)


def test_mvideosr_has_3474_parameters():
    assert param_count(build_model("mvideosr")) == 3474


@pytest.mark.parametrize("arch", ARCH_IDS)
def test_small_frame_maps_to_4x(arch, rng):
    x = rng.random((2, 3, 12, 20), dtype=np.float32)
    out = _run(build_model(arch), x)
    assert out.shape == (2, 3, 48, 80)
    assert out.dtype == np.float32
    assert np.isfinite(out).all()


@pytest.mark.parametrize("arch", ARCH_IDS)
def test_infer_shapes_agrees_with_execution(arch):
    g = build_model(arch)
    assert infer_shapes(g, (1, 3, 12, 20))[g.outputs["sr"]] == (1, 3, 48, 80)


def test_xjtu_matches_hand_written_network(rng):
    """Oracle: the same network written out with the loop convolution."""
    g = build_model("xjtu", {"init": "fixed-for-test"})
    p = g.params
    x = rng.random((1, 3, 5, 6))
    h = direct_conv(x, p["conv1.weight"], p["conv1.bias"], 1, 1)
    h = np.maximum(direct_conv(h, p["conv2.weight"], p["conv2.bias"], 1, 1), 0)
    h = np.maximum(direct_conv(h, p["conv3.weight"], p["conv3.bias"], 1, 1), 0)
    h = direct_conv(h, p["conv4.weight"], p["conv4.bias"], 1, 1)
    n, c, hh, ww = h.shape
    # depth-to-space written per output pixel
    ref = np.zeros((1, 3, hh * 4, ww * 4))
    for ch in range(3):
        for y in range(hh * 4):
            for xx in range(ww * 4):
                ref[0, ch, y, xx] = h[0, ch * 16 + (y % 4) * 4 + xx % 4, y // 4, xx // 4]
    out = forward_model(g, x.astype(np.float32))
    np.testing.assert_allclose(out, ref, atol=1e-5)


def test_xjtu_macs_closed_form():
    g = build_model("xjtu")
    hw = 180 * 320
    expected = 9 * hw * (3 * 16 + 16 * 16 + 16 * 16 + 16 * 48)
    assert count_macs(g, (1, 3, 180, 320)) == expected


def test_boe_transposed_conv_macs_counted_per_input_pixel():
    g = build_model("boe", {"channels": 2})
    per_lr = 9 * (3 * 2 + 4 * 2 * 2)  # conv1..conv5
    tconv = 16 * 2 * 2
    conv6 = 9 * 2 * 3 * 16
    assert count_macs(g, (1, 3, 1, 1)) == per_lr + tconv + conv6


def test_fixed_for_test_first_elements():
    g = build_model("mvideosr", {"init": "fixed-for-test"})
    w = g.params["conv1.weight"].ravel()
    phi = 0.6180339887498949
    for k in range(3):
        v = (2 * ((k + 1) * phi % 1.0) - 1) / np.sqrt(27)
        assert w[k] == np.float32(v)


def test_fixed_for_test_counts_across_tensors():
    g = build_model("xjtu", {"init": "fixed-for-test"})
    n_w1 = g.params["conv1.weight"].size
    b = g.params["conv1.bias"]
    expected = (fixed_sequence(n_w1, b.size) / np.sqrt(27)).astype(np.float32)
    np.testing.assert_array_equal(b, expected)


def test_fixed_for_test_ignores_seed():
    a = build_model("ncut", {"init": "fixed-for-test", "seed": 1})
    b = build_model("ncut", {"init": "fixed-for-test", "seed": 7})
    for k in a.params:
        np.testing.assert_array_equal(a.params[k], b.params[k])


def test_uniform_init_is_seeded_and_bounded():
    a = build_model("xjtu", {"seed": 3})
    b = build_model("xjtu", {"seed": 3})
    c = build_model("xjtu", {"seed": 4})
    assert all(np.array_equal(a.params[k], b.params[k]) for k in a.params)
    assert not np.array_equal(a.params["conv2.weight"], c.params["conv2.weight"])
    assert np.abs(a.params["conv2.weight"]).max() <= 1 / np.sqrt(16 * 9)


def test_prelu_slopes_start_at_quarter():
    g = build_model("mvideosr")
    np.testing.assert_array_equal(g.params["prelu.slope"], np.full(6, 0.25, np.float32))


def test_unknown_arch_and_config_key_rejected():
    with pytest.raises(GraphError):
        build_model("srgan")
    with pytest.raises(GraphError):
        build_model("xjtu", {"width": 3})
    with pytest.raises(GraphError):
        build_model("mvideosr", {"scale": 3})
    with pytest.raises(ValueError):
        build_model("xjtu", {"init": "xavier"})


def test_repeat_index_formula():
    idx = repeat_index()
    assert idx.shape == (48,)
    for c in range(3):
        for i in range(4):
            for j in range(4):
                assert idx[c * 16 + i * 4 + j] == c * 4 + (i // 2) * 2 + j // 2


def test_repeat_rejects_wrong_width(rng):
    with pytest.raises(ShapeError):
        repeat_weights_2x_to_4x(ConvParams(rng.random((48, 6, 3, 3)), rng.random(48), padding=1))


def test_transfer_output_is_nearest_upsampled_2x_output(rng):
    g2 = build_model("mvideosr", {"scale": 2, "seed": 5})
    g4 = transfer_2x_to_4x(g2, build_model("mvideosr", {"seed": 6}))
    x = rng.random((1, 3, 9, 7), dtype=np.float32)
    o2 = forward_model(g2, x)
    o4 = forward_model(g4, x)
    np.testing.assert_array_equal(o4, o2.repeat(2, axis=2).repeat(2, axis=3))


@pytest.mark.parametrize("value", [0.0, 0.25, 1.0])
def test_transfer_exact_on_constant_input(value):
    g2 = build_model("mvideosr", {"scale": 2, "seed": 5})
    g4 = transfer_2x_to_4x(g2, build_model("mvideosr", {"seed": 6}))
    x = np.full((1, 3, 8, 12), value, np.float32)
    o2 = forward_model(g2, x)
    np.testing.assert_array_equal(forward_model(g4, x), o2.repeat(2, axis=2).repeat(2, axis=3))


def test_transfer_copies_other_layers_verbatim():
    g2 = build_model("mvideosr", {"scale": 2, "seed": 5})
    g4 = transfer_2x_to_4x(g2, build_model("mvideosr", {"seed": 6}))
    for k in ("conv1.weight", "conv3.bias", "prelu.slope"):
        np.testing.assert_array_equal(g4.params[k], g2.params[k])


def test_recurrent_window_and_state_checks(rng):
    g = build_model("redcat")
    x = rng.random((1, 3, 6, 6), dtype=np.float32)
    with pytest.raises(GraphError):
        forward_recurrent(g, [x])
    with pytest.raises(ShapeError):
        forward_recurrent(g, [x, x], {"hidden": np.zeros((1, 3, 6, 6), np.float32)})
    with pytest.raises(GraphError):
        forward_model(g, x)


def test_recurrent_state_carries_information(rng):
    g = build_model("team221b")
    frames = [rng.random((1, 3, 6, 6), dtype=np.float32) for _ in range(3)]
    state = zero_state(g, 1, 6, 6)
    _, s1 = forward_recurrent(g, window_at(frames, 0, ("prev", "frame", "next")), state)
    sr_a, _ = forward_recurrent(g, window_at(frames, 1, ("prev", "frame", "next")), s1)
    sr_b, _ = forward_recurrent(g, window_at(frames, 1, ("prev", "frame", "next")), state)
    assert not np.array_equal(sr_a, sr_b)


def test_window_clamps_edges():
    frames = ["a", "b", "c"]
    assert window_at(frames, 0, ("prev", "frame", "next")) == ["a", "a", "b"]
    assert window_at(frames, 2, ("prev", "frame", "next")) == ["b", "c", "c"]


def test_run_sequence_is_deterministic(rng):
    g = build_model("redcat")
    frames = [rng.random((1, 3, 5, 5), dtype=np.float32) for _ in range(3)]
    a = run_sequence(g, frames)
    b = run_sequence(g, frames)
    assert len(a) == 3
    assert all(np.array_equal(p, q) for p, q in zip(a, b))


def test_describe_reports_bytes():
    d = describe(build_model("mvideosr"))
    assert d["param_count"] == 3474
    assert d["model_bytes"] > 4 * 3474


def test_frame_with_wrong_channels_rejected(rng):
    with pytest.raises(ShapeError):
        forward_model(build_model("xjtu"), rng.random((1, 1, 4, 4), dtype=np.float32))
