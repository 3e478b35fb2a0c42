import struct
from pathlib import Path

import numpy as np
import pytest

from nanosr import io
from nanosr.eval import ScoreRecord, table1_records
from nanosr.zoo import build_model, init_weights, param_count

GOLDEN = Path(__file__).parent / "golden"


def header_bytes(params):
    # 12-byte file header, then per tensor: u16 name len, name, u8 rank, u32 dims, u8 dtype
    return 12 + sum(2 + len(n.encode()) + 1 + 4 * np.ndim(v) + 1 for n, v in params.items())


def test_empty_file_is_header_only():
    data = io.weights_to_bytes({})
    assert data == b"NSRW" + struct.pack("<II", 1, 0)
    assert len(data) == 12
    assert io.weights_from_bytes(data) == {}


def test_round_trip_byte_identical(tmp_path):
    g = init_weights(build_model("rcbsr"), seed=3)
    p = io.save_weights(g, tmp_path / "w.nsrw")
    loaded = io.load_weights(p, build_model("rcbsr"))
    assert list(loaded.params) == list(g.params)
    for k in g.params:
        np.testing.assert_array_equal(loaded.params[k], g.params[k])
    assert io.weights_to_bytes(loaded.params) == p.read_bytes()


def test_mvideosr_file_size():
    g = build_model("mvideosr")
    data = io.weights_to_bytes(g.params)
    assert param_count(g) == 3474
    assert len(data) == 4 * 3474 + header_bytes(g.params)


def test_scalar_and_vector_tensors():
    params = {"s": np.float32(2.5), "v": np.arange(3, dtype=np.float32)}
    back = io.weights_from_bytes(io.weights_to_bytes(params))
    assert back["s"].shape == () and back["s"] == 2.5
    np.testing.assert_array_equal(back["v"], params["v"])


def test_truncated_file_names_tensor():
    data = io.weights_to_bytes({"a": np.zeros(4, np.float32), "tail.weight": np.ones((2, 2), np.float32)})
    with pytest.raises(io.WeightFormatError, match="tail.weight"):
        io.weights_from_bytes(data[:-3])


@pytest.mark.parametrize(
    "mutate,msg",
    [
        (lambda d: b"XXXX" + d[4:], "magic"),
        (lambda d: d[:4] + struct.pack("<I", 9) + d[8:], "version"),
        (lambda d: d + b"\0", "trailing"),
        (lambda d: d[:6], "magic"),
    ],
)
def test_corrupt_headers(mutate, msg):
    data = io.weights_to_bytes({"a": np.zeros(2, np.float32)})
    with pytest.raises(io.WeightFormatError, match=msg):
        io.weights_from_bytes(mutate(data))


def test_dims_mismatch_against_graph(tmp_path):
    g = build_model("xjtu")
    params = dict(g.params)
    name = next(iter(params))
    params[name] = np.zeros((1,) + np.shape(params[name])[1:], np.float32)
    p = io.save_weights(params, tmp_path / "bad.nsrw")
    with pytest.raises(io.WeightFormatError, match="dims"):
        io.load_weights(p, g)


def test_missing_tensor_against_graph(tmp_path):
    g = build_model("xjtu")
    params = dict(g.params)
    params.popitem()
    with pytest.raises(io.WeightFormatError, match="missing"):
        io.load_weights(io.save_weights(params, tmp_path / "m.nsrw"), g)


def test_golden_report_bytewise(tmp_path):
    recs = [ScoreRecord.from_metrics(m) for m in table1_records()]
    txt, csv = io.write_report(recs, tmp_path / "table1_report.txt")
    assert txt.read_bytes() == (GOLDEN / "table1_report.txt").read_bytes()
    assert csv.read_bytes() == (GOLDEN / "table1_report.csv").read_bytes()


def test_report_rerun_identical(tmp_path):
    recs = [ScoreRecord.from_metrics(m) for m in table1_records()]
    a = io.write_report(recs, tmp_path / "a.txt")[0].read_bytes()
    b = io.write_report(list(reversed(recs)), tmp_path / "b.txt")[0].read_bytes()
    assert a == b


def test_empty_report(tmp_path):
    txt, csv = io.write_report([], tmp_path / "e.txt")
    assert len(txt.read_text().splitlines()) == 2
    assert csv.read_text() == "Team,\"Size, KB\",PSNR,SSIM,\"Runtime, ms\",\"Power, W@30FPS\",Final Score\n"
