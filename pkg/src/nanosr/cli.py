"""Command-line entry point.

Exit codes: 0 ok, 1 runtime error, 2 usage or configuration error. Errors
are printed as a single line ``nanosr: error: <Kind>: <message>``.
"""
from __future__ import annotations

import argparse
import contextlib
import os
import sys
from pathlib import Path

import numpy as np
import yaml

from . import __version__

EXIT_OK, EXIT_ERROR, EXIT_USAGE = 0, 1, 2

# Keys accepted in a --config file. Paths are resolved against the file's directory.
CONFIG_KEYS = {
    "arch": "zoo architecture id",
    "model": "architecture config overrides (channels, blocks, ...)",
    "data": "dataset root",
    "split": "evaluation split",
    "stages": "list of stage mappings; replaces the arch's published recipe",
    "desk": "scale the recipe down for a CPU (bool)",
    "seed": "integer seed",
    "power": "measured power in W@30FPS",
    "enforce_runtime": "apply the 33 ms gate (bool)",
    "weights": "input weight file",
    "out": "output weight file",
    "teacher_arch": "teacher architecture for distillation stages",
    "teacher_weights": "teacher weight file",
}
_PATH_KEYS = ("data", "weights", "out", "teacher_weights")


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- config


def load_config(path) -> dict:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise UsageError(f"cannot read config {path}: {e.strerror}") from None
    except yaml.YAMLError as e:
        raise UsageError(f"{path}: invalid YAML ({str(e).splitlines()[0]})") from None
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise UsageError(f"{path}: top level must be a mapping")
    unknown = sorted(set(raw) - set(CONFIG_KEYS))
    if unknown:
        raise UsageError(f"{path}: unknown config keys {unknown}; allowed {sorted(CONFIG_KEYS)}")
    base = path.resolve().parent
    for k in _PATH_KEYS:
        if raw.get(k) is not None:
            raw[k] = str((base / raw[k]).resolve())
    if "stages" in raw and not isinstance(raw["stages"], list):
        raise UsageError(f"{path}: stages must be a list")
    return raw


def _settings(args) -> dict:
    """Config file values overridden by any flag given on the command line."""
    cfg = load_config(args.config) if args.config else {}
    for key in CONFIG_KEYS:
        v = getattr(args, key, None)
        if v is not None and v is not False:
            cfg[key] = v
    if getattr(args, "no_runtime_gate", False):
        cfg["enforce_runtime"] = False
    cfg.setdefault("seed", 0)
    cfg.setdefault("enforce_runtime", True)
    return cfg


def _need(cfg, key, hint):
    if cfg.get(key) is None:
        raise UsageError(f"missing {key}: {hint}")
    return cfg[key]


def _size(text: str) -> tuple[int, int]:
    try:
        h, w = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected HxW, got {text!r}") from None
    return h, w


def _load_graph(cfg, fused=False):
    from .io import load_weights
    from .reparam import fuse_model
    from .zoo import build_model

    g = build_model(_need(cfg, "arch", "pass an arch id"), dict(cfg.get("model") or {}, seed=cfg["seed"]))
    if cfg.get("weights"):
        g = load_weights(cfg["weights"], g)
    return fuse_model(g) if fused else g


# ---------------------------------------------------------------- subcommands


def cmd_train(args, cfg):
    from . import data as D
    from .io import load_weights, save_weights
    from .train import Stage, desk_stage, recipe, run_recipe
    from .zoo import build_model

    arch = _need(cfg, "arch", "pass an arch id")
    idx = D.scan_dataset(_need(cfg, "data", "use --data or a config file"))
    if cfg.get("stages") is not None:
        stages = [Stage.from_dict(dict(s)) for s in cfg["stages"]]
        if cfg.get("desk"):
            stages = [desk_stage(s) for s in stages]
    else:
        stages = recipe(arch, desk=bool(cfg.get("desk")))
    teacher = None
    if cfg.get("teacher_arch"):
        teacher = build_model(cfg["teacher_arch"], {"seed": cfg["seed"]})
        if cfg.get("teacher_weights"):
            teacher = load_weights(cfg["teacher_weights"], teacher)

    def on_stage(i, g, log):
        for line in log.lines():
            print(f"stage {i}: {line}", flush=True)

    g, _ = run_recipe(arch, stages, idx, seed=cfg["seed"], config=cfg.get("model"), teacher=teacher, on_stage=on_stage)
    out = Path(cfg.get("out") or f"{arch}.nsrw")
    save_weights(g, out)
    print(f"wrote {out}")
    return EXIT_OK


def cmd_eval(args, cfg):
    from . import data as D
    from .eval import bicubic_baseline, challenge_score, evaluate_dataset

    idx = D.scan_dataset(_need(cfg, "data", "use --data or a config file"))
    split = cfg.get("split") or "val"
    g = _load_graph(cfg)
    p, s = evaluate_dataset(g, idx, split, with_ssim=not args.no_ssim)
    bp, bs = bicubic_baseline(idx, split, with_ssim=not args.no_ssim)
    print(f"model   psnr {p:.4f}" + ("" if s is None else f"  ssim {s:.4f}"))
    print(f"bicubic psnr {bp:.4f}" + ("" if bs is None else f"  ssim {bs:.4f}"))
    if cfg.get("power") is not None:
        score = challenge_score(p, cfg["power"], args.runtime, cfg["enforce_runtime"])
        print(f"score {score:.2f}")
    return EXIT_OK


def cmd_fuse(args, cfg):
    from .io import save_weights
    from .reparam import fuse_model
    from .zoo import forward_model, param_count

    g = _load_graph(cfg)
    fused = fuse_model(g)
    x = np.random.default_rng(cfg["seed"]).random((1, 3, 32, 32), dtype=np.float32)
    diff = float(np.abs(forward_model(g, x) - forward_model(fused, x)).max()) if not g.recurrent else 0.0
    out = Path(cfg.get("out") or f"{g.arch_id}_fused.nsrw")
    save_weights(fused, out)
    print(f"params {param_count(g)} -> {param_count(fused)}  max abs diff {diff:.3e}")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_bench(args, cfg):
    from .eval import MetricsRecord, challenge_score, host_descriptor, measure_runtime
    from .io import weights_to_bytes
    from .zoo import count_macs, param_count

    g = _load_graph(cfg, fused=args.fused)
    dims = (1, 3) + args.size
    ms = measure_runtime(g, dims, warmup=args.warmup, iters=args.iters, seed=cfg["seed"])
    m = MetricsRecord(g.arch_id, float("nan"), runtime_ms=ms, macs=count_macs(g, dims),
                      param_count=param_count(g), model_bytes=len(weights_to_bytes(g.params)))
    print(f"arch {g.arch_id}{' (fused)' if args.fused else ''}  input {dims}")
    print(f"params {m.param_count}  bytes {m.model_bytes}  macs {m.macs}")
    print(f"runtime_ms {ms:.3f}  (host timing, non-deterministic; {host_descriptor()})")
    print(f"energy_proxy {m.energy_proxy:.4g}  (macs x ms, not W@30FPS)")
    if args.psnr is not None and cfg.get("power") is not None:
        print(f"score {challenge_score(args.psnr, cfg['power'], ms, cfg['enforce_runtime']):.2f}")
    return EXIT_OK


def cmd_score(args, cfg):
    from .eval import ScoreRecord, challenge_score, render_table, leaderboard, table1_records
    from .io import write_report

    if args.table1:
        recs = [ScoreRecord.from_metrics(m, cfg["enforce_runtime"]) for m in table1_records()]
        if args.report:
            txt, csv = write_report(recs, args.report)
            print(f"wrote {txt} and {csv}")
        else:
            sys.stdout.write(render_table(leaderboard(recs)))
        return EXIT_OK
    if args.psnr is None or cfg.get("power") is None:
        raise UsageError("score needs --psnr and --power (or --table1)")
    print(f"{challenge_score(args.psnr, cfg['power'], args.runtime, cfg['enforce_runtime']):.2f}")
    return EXIT_OK


def cmd_make_fixtures(args, cfg):
    from .data import make_desk_dataset

    out = _need(cfg, "data", "use --data DIR for the output root")
    idx = make_desk_dataset(out, args.sequences, args.frames, args.size, seed=cfg["seed"])
    counts = {s: len(idx.split(s)) for s in ("train", "val", "test")}
    print(f"wrote {len(idx.sequences)} sequences {counts} of {args.frames} frames at {idx.frame_size} to {out}")
    return EXIT_OK


def cmd_describe(args, cfg):
    from .zoo import CARDS, count_macs, infer_shapes
    from .zoo.init import describe

    g = _load_graph(cfg)
    info = describe(g)
    dims = (1, 3) + args.size
    shapes = infer_shapes(g, dims)
    print(f"{g.arch_id} ({CARDS[g.arch_id].team})  scale x{g.scale}{'  recurrent' if g.recurrent else ''}")
    print(f"params {info['param_count']}  weight file bytes {info['model_bytes']}  macs@{args.size[0]}x{args.size[1]} {count_macs(g, dims)}")
    rows = [("node", "op", "output", "params")]
    for n in g.nodes:
        k = sum(int(np.asarray(g.params[p]).size) for p in n.params)
        if n.op == "block":
            k = sum(int(np.asarray(g.params[p]).size) for br in n.attrs["branches"] for p in br.params)
        rows.append((n.id, n.op, "x".join(map(str, shapes[n.id][1:])), str(k)))
    widths = [max(len(r[i]) for r in rows) for i in range(4)]
    for r in rows:
        print("  ".join(c.ljust(w) if i < 3 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths))).rstrip())
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="YAML run config; flags override its values")
    common.add_argument("--seed", type=int, default=None)

    power = argparse.ArgumentParser(add_help=False)
    power.add_argument("--power", type=float, default=None, metavar="WATTS", help="power in W@30FPS")
    power.add_argument("--no-runtime-gate", action="store_true", help="do not zero scores over 33 ms")

    model = argparse.ArgumentParser(add_help=False)
    model.add_argument("arch", nargs="?", default=None)
    model.add_argument("--weights", metavar="PATH")

    p = argparse.ArgumentParser(prog="nanosr", description="Tiny video super-resolution zoo, trainer and scorer.")
    p.add_argument("--version", action="version", version=f"nanosr {__version__}")
    sub = p.add_subparsers(dest="command", metavar="COMMAND")

    t = sub.add_parser("train", parents=[common, model], help="train an arch with its recipe")
    t.add_argument("--data", metavar="DIR")
    t.add_argument("--desk", action="store_true", help="desk-scale recipe")
    t.add_argument("--out", metavar="PATH")
    t.add_argument("--teacher-arch", dest="teacher_arch")
    t.add_argument("--teacher-weights", dest="teacher_weights")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", parents=[common, model, power], help="PSNR/SSIM on a dataset split")
    e.add_argument("--data", metavar="DIR")
    e.add_argument("--split", choices=("train", "val", "test"))
    e.add_argument("--runtime", type=float, help="runtime ms used for the score")
    e.add_argument("--no-ssim", action="store_true")
    e.set_defaults(func=cmd_eval)

    f = sub.add_parser("fuse", parents=[common, model], help="collapse multi-branch blocks")
    f.add_argument("--out", metavar="PATH")
    f.set_defaults(func=cmd_fuse)

    b = sub.add_parser("bench", parents=[common, model, power], help="host runtime and MACs")
    b.add_argument("--fused", action="store_true")
    b.add_argument("--size", type=_size, default=(180, 320), metavar="HxW")
    b.add_argument("--iters", type=int, default=20)
    b.add_argument("--warmup", type=int, default=2)
    b.add_argument("--psnr", type=float)
    b.set_defaults(func=cmd_bench)

    s = sub.add_parser("score", parents=[common, power], help="challenge score or leaderboard report")
    s.add_argument("--psnr", type=float)
    s.add_argument("--runtime", type=float, metavar="MS")
    s.add_argument("--table1", action="store_true", help="score the published leaderboard rows")
    s.add_argument("--report", metavar="PATH", help="with --table1, write text + CSV report")
    s.set_defaults(func=cmd_score)

    m = sub.add_parser("make-fixtures", parents=[common], help="write the seeded desk dataset")
    m.add_argument("--data", metavar="DIR", help="output root")
    m.add_argument("--sequences", type=int, default=20)
    m.add_argument("--frames", type=int, default=6)
    m.add_argument("--size", type=_size, default=(128, 192), metavar="HxW")
    m.set_defaults(func=cmd_make_fixtures)

    d = sub.add_parser("describe", parents=[common, model], help="param count and layer table")
    d.add_argument("--size", type=_size, default=(180, 320), metavar="HxW")
    d.set_defaults(func=cmd_describe)
    return p


def _threads():
    raw = os.environ.get("NANOSR_THREADS")
    if not raw:
        return contextlib.nullcontext()
    try:
        n = int(raw)
        if n < 1:
            raise ValueError
    except ValueError:
        raise UsageError(f"NANOSR_THREADS must be a positive integer, got {raw!r}") from None
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def _fail(kind, msg, code):
    msg = " ".join(str(msg).split())
    print(f"nanosr: error: {kind}: {msg}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    if not argv:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        cfg = _settings(args)
        with _threads():
            return args.func(args, cfg)
    except UsageError as e:
        return _fail("UsageError", e, EXIT_USAGE)
    except KeyboardInterrupt:
        return _fail("Interrupted", "stopped by user", EXIT_ERROR)
    except (ValueError, KeyError, OSError, RuntimeError) as e:
        msg = e.args[0] if isinstance(e, KeyError) and e.args else e
        return _fail(type(e).__name__, msg, EXIT_ERROR)


if __name__ == "__main__":
    sys.exit(main())
