"""Binary weight files and leaderboard reports.

Weight file layout, all integers little-endian:

    b"NSRW" | version u32 | tensor count u32
    per tensor: name length u16 | UTF-8 name | rank u8 | dims u32 * rank
                | dtype u8 (0 = float32) | float32 payload
"""
from __future__ import annotations

import struct
from pathlib import Path
from typing import Mapping

import numpy as np

MAGIC = b"NSRW"
VERSION = 1
DTYPE_F32 = 0


class WeightFormatError(ValueError):
    pass


def weights_to_bytes(params: Mapping[str, np.ndarray]) -> bytes:
    parts = [MAGIC, struct.pack("<II", VERSION, len(params))]
    for name, value in params.items():
        arr = np.asarray(value, dtype="<f4", order="C")  # ascontiguousarray would make 0-d arrays 1-d
        raw = name.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise WeightFormatError(f"tensor name too long: {name[:40]}...")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(struct.pack("<B", DTYPE_F32))
        parts.append(arr.tobytes())
    return b"".join(parts)


def weights_from_bytes(data: bytes) -> dict[str, np.ndarray]:
    if len(data) < 12 or data[:4] != MAGIC:
        raise WeightFormatError("bad magic: not an NSRW weight file")
    version, count = struct.unpack_from("<II", data, 4)
    if version != VERSION:
        raise WeightFormatError(f"unsupported weight file version {version}")
    pos = 12
    out: dict[str, np.ndarray] = {}
    for i in range(count):
        name = f"#{i}"
        try:
            (nlen,) = struct.unpack_from("<H", data, pos)
            pos += 2
            if pos + nlen > len(data):
                raise struct.error("name")
            name = data[pos : pos + nlen].decode("utf-8")
            pos += nlen
            (rank,) = struct.unpack_from("<B", data, pos)
            pos += 1
            dims = struct.unpack_from(f"<{rank}I", data, pos)
            pos += 4 * rank
            (dtype,) = struct.unpack_from("<B", data, pos)
            pos += 1
        except struct.error:
            raise WeightFormatError(f"truncated header for tensor {name!r}") from None
        if dtype != DTYPE_F32:
            raise WeightFormatError(f"tensor {name!r}: unknown dtype code {dtype}")
        nbytes = 4 * int(np.prod(dims, dtype=np.int64))
        if pos + nbytes > len(data):
            raise WeightFormatError(f"truncated payload for tensor {name!r}")
        if name in out:
            raise WeightFormatError(f"duplicate tensor name {name!r}")
        arr = np.frombuffer(data, dtype="<f4", count=nbytes // 4, offset=pos)
        out[name] = arr.astype(np.float32).reshape(dims)
        pos += nbytes
    if pos != len(data):
        raise WeightFormatError(f"{len(data) - pos} trailing bytes after last tensor")
    return out


def save_weights(g_or_params, path) -> Path:
    params = getattr(g_or_params, "params", g_or_params)
    path = Path(path)
    path.write_bytes(weights_to_bytes(params))
    return path


def load_weights(path, graph=None):
    """Read a weight file; with ``graph``, validate names/dims and return the loaded graph."""
    params = weights_from_bytes(Path(path).read_bytes())
    if graph is None:
        return params
    for name, value in graph.params.items():
        if name not in params:
            raise WeightFormatError(f"tensor {name!r} missing from {path}")
        if params[name].shape != np.shape(value):
            raise WeightFormatError(
                f"tensor {name!r}: file dims {params[name].shape} != graph dims {np.shape(value)}"
            )
    extra = set(params) - set(graph.params)
    if extra:
        raise WeightFormatError(f"unexpected tensors in {path}: {sorted(extra)}")
    return graph.with_params(params)


def write_report(records, path) -> tuple[Path, Path]:
    """Write the leaderboard as an aligned text table and a CSV sibling."""
    from .eval import leaderboard, render_csv, render_table

    rows = leaderboard(records)
    path = Path(path)
    csv_path = path.with_suffix(".csv")
    path.write_text(render_table(rows), encoding="utf-8", newline="\n")
    csv_path.write_text(render_csv(rows), encoding="utf-8", newline="\n")
    return path, csv_path
