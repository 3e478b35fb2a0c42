import subprocess
import sys

import numpy as np
import pytest

from nanosr import cli
from nanosr.io import load_weights
from nanosr.zoo import build_model


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_no_args_prints_usage(capsys):
    code, _, err = run(capsys)
    assert code == 2 and err.startswith("usage: nanosr")


def test_unknown_subcommand(capsys):
    assert run(capsys, "frobnicate")[0] == 2
    assert run(capsys, "score", "--bogus-flag")[0] == 2


def test_score_table_row(capsys):
    code, out, _ = run(capsys, "score", "--psnr", "27.34", "--power", "0.09", "--runtime", "3.05")
    assert code == 0 and out.strip() == "90.88"


def test_score_runtime_gate(capsys):
    assert run(capsys, "score", "--psnr", "28", "--power", "0.1", "--runtime", "40")[1].strip() == "0.00"
    out = run(capsys, "score", "--psnr", "28", "--power", "0.1", "--runtime", "40", "--no-runtime-gate")[1]
    assert out.strip() == f"{1.66 * 28 + 45:.2f}"


def test_score_needs_power(capsys):
    code, _, err = run(capsys, "score", "--psnr", "27")
    assert code == 2 and err.count("\n") == 1 and err.startswith("nanosr: error: UsageError:")


def test_score_table1_report(capsys, tmp_path):
    from pathlib import Path

    golden = Path(__file__).parent / "golden"
    code, out, _ = run(capsys, "score", "--table1", "--report", str(tmp_path / "r.txt"))
    assert code == 0
    assert (tmp_path / "r.txt").read_bytes() == (golden / "table1_report.txt").read_bytes()
    assert (tmp_path / "r.csv").read_bytes() == (golden / "table1_report.csv").read_bytes()


def test_describe_mvideosr(capsys):
    code, out, _ = run(capsys, "describe", "mvideosr")
    assert code == 0
    assert "params 3474" in out
    assert "conv4" in out and "48x180x320" in out and "3x720x1280" in out


def test_runtime_error_is_single_line(capsys):
    code, _, err = run(capsys, "describe", "nonexistent")
    assert code == 1 and err.count("\n") == 1 and "nonexistent" in err


def test_config_unknown_key(capsys, tmp_path):
    cfg = tmp_path / "run.yaml"
    cfg.write_text("arch: xjtu\nlearning_rate: 0.1\n")
    code, _, err = run(capsys, "describe", "--config", str(cfg))
    assert code == 2 and "learning_rate" in err


def test_config_supplies_values_and_flags_override(capsys, tmp_path):
    cfg = tmp_path / "run.yaml"
    cfg.write_text("arch: xjtu\npower: 0.5\n")
    assert run(capsys, "describe", "--config", str(cfg))[1].startswith("xjtu")
    out = run(capsys, "score", "--config", str(cfg), "--psnr", "27", "--power", "0.09")[1]
    assert out.strip() == f"{1.66 * 27 + 50 * 0.91:.2f}"


def test_threads_env(capsys, monkeypatch):
    monkeypatch.setenv("NANOSR_THREADS", "1")
    assert run(capsys, "describe", "xjtu")[0] == 0
    monkeypatch.setenv("NANOSR_THREADS", "zero")
    assert run(capsys, "describe", "xjtu")[0] == 2


def test_train_fuse_bench_eval(capsys, tmp_path, tiny_desk):
    cfg = tmp_path / "run.yaml"
    cfg.write_text(
        "arch: rcbsr\n"
        f"data: {tiny_desk.root}\n"
        "stages:\n  - {iterations: 3, lr: 0.001, batch: 2, patch: 16, log_every: 1}\n"
        "out: w.nsrw\n"
    )
    code, out, err = run(capsys, "train", "--config", str(cfg), "--seed", "2")
    assert code == 0, err
    assert out.count("stage 0:") == 3
    w = tmp_path / "w.nsrw"
    load_weights(w, build_model("rcbsr"))

    code, out, err = run(capsys, "fuse", "rcbsr", "--weights", str(w), "--out", str(tmp_path / "f.nsrw"))
    assert code == 0, err
    diff = float(out.split("max abs diff ")[1].split()[0])
    assert diff <= 1e-5

    code, out, _ = run(capsys, "bench", "rcbsr", "--weights", str(w), "--fused", "--size", "16x16", "--iters", "2", "--warmup", "0")
    assert code == 0 and "runtime_ms" in out and "non-deterministic" in out

    code, out, err = run(capsys, "eval", "rcbsr", "--weights", str(w), "--data", str(tiny_desk.root), "--power", "0.1", "--runtime", "3")
    assert code == 0, err
    assert out.startswith("model   psnr") and "bicubic psnr" in out and "score" in out


def test_make_fixtures(capsys, tmp_path):
    code, out, _ = run(capsys, "make-fixtures", "--data", str(tmp_path / "d"), "--sequences", "3", "--frames", "2", "--size", "16x16")
    assert code == 0 and "3 sequences" in out
    assert (tmp_path / "d" / "val_lr" / "001" / "00000001.png").exists()


def test_console_script_entry():
    r = subprocess.run([sys.executable, "-m", "nanosr.cli", "score", "--psnr", "28.45", "--power", "3.73", "--runtime", "26.8"],
                       capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.strip() == "-89.27"
