"""Frame sequences on disk, x4 bicubic degradation, patch sampling, augmentation.

Layout (frames are 8-bit RGB PNG, index zero-padded to 8 digits)::

    <root>/<split>/<seq_id>/<frame_idx>.png       high resolution
    <root>/<split>_lr/<seq_id>/<frame_idx>.png    low resolution (x4 smaller)

Patch sizes are always high-resolution sizes; the LR patch is size / 4.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .tensor import ShapeError
from .tensor.kernels import resample

SPLITS = ("train", "val", "test")
REDS_COUNTS = {"train": 240, "val": 30, "test": 30}
SCALE = 4
CUBIC_A = -0.5


class DataError(ValueError):
    pass


# ---------------------------------------------------------------- images


def decode_image(path) -> np.ndarray:
    """(1, 3, h, w) float32 in [0, 1], channels R, G, B."""
    try:
        with Image.open(path) as im:
            if im.mode != "RGB":
                raise DataError(f"{path}: expected an RGB image, got mode {im.mode}")
            arr = np.asarray(im, dtype=np.uint8)
    except (OSError, UnidentifiedImageError) as e:
        raise DataError(f"{path}: unreadable image ({e})") from None
    return (arr.transpose(2, 0, 1)[None].astype(np.float32) / 255.0).astype(np.float32)


def to_uint8(img) -> np.ndarray:
    """(1, 3, h, w) float -> (h, w, 3) uint8, rounding half away from zero after clipping."""
    x = np.clip(np.asarray(img, dtype=np.float64)[0], 0.0, 1.0)
    return np.floor(x * 255.0 + 0.5).astype(np.uint8).transpose(1, 2, 0)


def encode_image(img, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(to_uint8(img), mode="RGB").save(path, format="PNG")
    return path


# ---------------------------------------------------------------- resampling


def cubic(x):
    """Keys cubic convolution kernel with a = -0.5."""
    a = CUBIC_A
    x = np.abs(np.asarray(x, dtype=np.float64))
    x2, x3 = x * x, x * x * x
    near = (a + 2) * x3 - (a + 3) * x2 + 1
    far = a * x3 - 5 * a * x2 + 8 * a * x - 4 * a
    return np.where(x <= 1, near, np.where(x < 2, far, 0.0))


def bicubic_matrix(n_in: int, n_out: int) -> np.ndarray:
    """(n_out, n_in) resampling weights; antialiased when shrinking, edges clamped."""
    scale = n_out / n_in
    width = 1.0 / scale if scale < 1 else 1.0
    support = 2.0 * width
    m = np.zeros((n_out, n_in))
    for o in range(n_out):
        center = (o + 0.5) / scale - 0.5
        lo = math.floor(center - support)
        hi = math.ceil(center + support)
        taps = np.arange(lo, hi + 1)
        w = cubic((center - taps) / width)
        w = w / w.sum()
        np.add.at(m[o], np.clip(taps, 0, n_in - 1), w)
    return m


def bicubic_resize(img, out_h: int, out_w: int) -> np.ndarray:
    if out_h < 1 or out_w < 1:
        raise ShapeError("output size must be positive")
    x = np.asarray(img)
    if x.ndim != 4:
        raise ShapeError(f"expected NCHW, got {x.shape}")
    dtype = x.dtype if x.dtype in (np.float32, np.float64) else np.float32
    mh = bicubic_matrix(x.shape[2], out_h)
    mw = bicubic_matrix(x.shape[3], out_w)
    return resample(x.astype(dtype), mh, mw)


def make_lr(hr) -> np.ndarray:
    h, w = np.shape(hr)[2:]
    if h % SCALE or w % SCALE:
        raise ShapeError(f"HR size {h}x{w} not divisible by {SCALE}")
    return bicubic_resize(hr, h // SCALE, w // SCALE)


def bicubic_upscale(lr, scale: int = SCALE) -> np.ndarray:
    h, w = np.shape(lr)[2:]
    return bicubic_resize(lr, h * scale, w * scale)


# ---------------------------------------------------------------- dataset index


@dataclass(frozen=True)
class Sequence:
    seq_id: str
    split: str
    n_frames: int
    hr_dir: Path
    lr_dir: Path

    def hr_path(self, t: int) -> Path:
        return self.hr_dir / f"{t:08d}.png"

    def lr_path(self, t: int) -> Path:
        return self.lr_dir / f"{t:08d}.png"


@dataclass(frozen=True)
class DatasetIndex:
    root: Path
    sequences: tuple[Sequence, ...]
    frame_size: tuple[int, int]
    mode: str = "desk"

    def split(self, name: str) -> list[Sequence]:
        return [s for s in self.sequences if s.split == name]

    def load(self, seq: Sequence, t: int) -> tuple[np.ndarray, np.ndarray]:
        return _cached_decode(str(seq.hr_path(t))), _cached_decode(str(seq.lr_path(t)))


@functools.lru_cache(maxsize=4096)
def _cached_decode(path: str) -> np.ndarray:
    arr = decode_image(path)
    arr.setflags(write=False)
    return arr


def scan_dataset(root, mode: str = "desk") -> DatasetIndex:
    """Resolve the on-disk layout; ``mode='reds'`` also enforces the 240/30/30 split."""
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"dataset root {root} does not exist")
    seqs = []
    size = None
    for split in SPLITS:
        hr_split = root / split
        if not hr_split.is_dir():
            continue
        for seq_dir in sorted(p for p in hr_split.iterdir() if p.is_dir()):
            frames = sorted(seq_dir.glob("*.png"))
            if not frames:
                continue
            lr_dir = root / f"{split}_lr" / seq_dir.name
            for i, f in enumerate(frames):
                if f.name != f"{i:08d}.png":
                    raise DataError(f"{seq_dir}: frames must be numbered 00000000.png upward")
                lr = lr_dir / f.name
                if not lr.exists():
                    raise DataError(f"missing LR frame {lr}")
                with Image.open(f) as im_hr, Image.open(lr) as im_lr:
                    w, h = im_hr.size
                    if size is None:
                        size = (h, w)
                    elif (h, w) != size:
                        raise DataError(f"{f}: frame size {(h, w)} differs from {size}")
                    if im_lr.size != (w // SCALE, h // SCALE) or h % SCALE or w % SCALE:
                        raise DataError(f"{lr}: LR size {im_lr.size[::-1]} is not HR {(h, w)} / {SCALE}")
            seqs.append(Sequence(seq_dir.name, split, len(frames), seq_dir, lr_dir))
    if not seqs:
        raise DataError(f"no sequences under {root}")
    if mode == "reds":
        counts = {s: sum(q.split == s for q in seqs) for s in SPLITS}
        if counts != REDS_COUNTS:
            raise DataError(f"REDS layout expects {REDS_COUNTS}, found {counts}")
    elif mode != "desk":
        raise DataError(f"unknown dataset mode {mode!r}")
    return DatasetIndex(root, tuple(seqs), size, mode)


# ---------------------------------------------------------------- patches


@dataclass(frozen=True)
class PatchPair:
    lr: np.ndarray
    hr: np.ndarray
    provenance: tuple  # (seq_id, frame, y, x) of the HR crop


@dataclass(frozen=True)
class ClipPair:
    """Aligned patches from consecutive frames, for recurrent models."""

    lr: tuple[np.ndarray, ...]
    hr: tuple[np.ndarray, ...]
    provenance: tuple  # (seq_id, first frame, y, x)


def _patch_hw(p):
    ph, pw = (p, p) if isinstance(p, int) else tuple(p)
    if ph % SCALE or pw % SCALE or ph < SCALE or pw < SCALE:
        raise DataError(f"patch size {p} must be a positive multiple of {SCALE}")
    return ph, pw


def _draw(idx: DatasetIndex, p, rng, split, length):
    ph, pw = _patch_hw(p)
    h, w = idx.frame_size
    if ph > h or pw > w:
        raise DataError(f"patch {ph}x{pw} larger than frame {h}x{w}")
    seqs = idx.split(split)
    if not seqs:
        raise DataError(f"no {split} sequences")
    seq = seqs[int(rng.integers(len(seqs)))]
    if seq.n_frames < length:
        raise DataError(f"{seq.seq_id} has fewer than {length} frames")
    t = int(rng.integers(seq.n_frames - length + 1))
    y = SCALE * int(rng.integers((h - ph) // SCALE + 1))
    x = SCALE * int(rng.integers((w - pw) // SCALE + 1))
    return seq, t, y, x, ph, pw


def _crop(idx, seq, t, y, x, ph, pw):
    hr, lr = idx.load(seq, t)
    s = SCALE
    return (
        np.ascontiguousarray(lr[:, :, y // s : (y + ph) // s, x // s : (x + pw) // s]),
        np.ascontiguousarray(hr[:, :, y : y + ph, x : x + pw]),
    )


def sample_patches(idx: DatasetIndex, p, n: int, seed: int, split: str = "train") -> list[PatchPair]:
    """``n`` aligned LR/HR patch pairs, a pure function of (idx, p, n, seed)."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        seq, t, y, x, ph, pw = _draw(idx, p, rng, split, 1)
        lr, hr = _crop(idx, seq, t, y, x, ph, pw)
        out.append(PatchPair(lr, hr, (seq.seq_id, t, y, x)))
    return out


def sample_clips(idx: DatasetIndex, p, n: int, seed: int, length: int, split: str = "train") -> list[ClipPair]:
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        seq, t, y, x, ph, pw = _draw(idx, p, rng, split, length)
        pairs = [_crop(idx, seq, t + k, y, x, ph, pw) for k in range(length)]
        out.append(ClipPair(tuple(a for a, _ in pairs), tuple(b for _, b in pairs), (seq.seq_id, t, y, x)))
    return out


def _geo(x, hflip, vflip, rot90):
    if hflip:
        x = x[..., ::-1]
    if vflip:
        x = x[..., ::-1, :]
    if rot90 % 4:
        x = np.rot90(x, rot90 % 4, axes=(-2, -1))
    return np.ascontiguousarray(x)


def augment(pair, flips=(False, False), rot90: int = 0):
    """Apply the same flips (horizontal, vertical) and quarter turns to LR and HR."""
    h, v = flips
    if isinstance(pair, ClipPair):
        return ClipPair(
            tuple(_geo(a, h, v, rot90) for a in pair.lr),
            tuple(_geo(b, h, v, rot90) for b in pair.hr),
            pair.provenance,
        )
    return PatchPair(_geo(pair.lr, h, v, rot90), _geo(pair.hr, h, v, rot90), pair.provenance)


def random_augment(pair, rng, flips: bool = True, rotations: bool = False):
    h = bool(rng.integers(2)) if flips else False
    v = bool(rng.integers(2)) if flips else False
    r = int(rng.integers(4)) if rotations else 0
    return augment(pair, (h, v), r)


# ---------------------------------------------------------------- desk fixtures

DESK_VERSION = 3


def _pink_spectrum(rng, h, w, alpha):
    """Fourier coefficients of a zero-mean field with amplitude ~ 1/f^alpha, unit std."""
    fy = np.fft.fftfreq(h)[:, None]
    fx = np.fft.fftfreq(w)[None, :]
    f = np.hypot(fy, fx)
    amp = np.where(f > 0, 1.0 / np.maximum(f, 1.0 / max(h, w)) ** alpha, 0.0)
    spec = np.fft.fft2(rng.standard_normal((h, w))) * amp
    return spec / np.real(np.fft.ifft2(spec)).std()


def _shifted(spec, dy, dx):
    """Sub-pixel periodic translation by (dy, dx) via a Fourier phase ramp."""
    h, w = spec.shape
    fy = np.fft.fftfreq(h)[:, None]
    fx = np.fft.fftfreq(w)[None, :]
    return np.real(np.fft.ifft2(spec * np.exp(-2j * np.pi * (fy * dy + fx * dx))))


def _fill(leaf, t, yy, xx, scale):
    """Colour of a leaf (or the background) at pixel centres: gradient plus moving texture."""
    ramp = (np.cos(leaf["angle"]) * xx + np.sin(leaf["angle"]) * yy) / scale
    img = leaf["c0"][:, None, None] + (leaf["c1"] - leaf["c0"])[:, None, None] * np.clip(ramp + 0.5, 0, 1)[None]
    tex = leaf["texture"]
    if tex is not None:
        field = _shifted(tex["spec"], tex["vy"] * t, tex["vx"] * t)
        img = img + tex["amp"] * field[None]
    return img


def _coverage(leaf, t, h, w, ss=4):
    """Fraction of each pixel covered by a moving disc, from ss x ss supersampling."""
    cy = leaf["cy"] + leaf["vy"] * t
    cx = leaf["cx"] + leaf["vx"] * t
    r = leaf["r"]
    y0, y1 = max(0, int(cy - r) - 1), min(h, int(cy + r) + 2)
    x0, x1 = max(0, int(cx - r) - 1), min(w, int(cx + r) + 2)
    cov = np.zeros((h, w))
    if y0 >= y1 or x0 >= x1:
        return cov
    sy = y0 + (np.arange((y1 - y0) * ss) + 0.5) / ss
    sx = x0 + (np.arange((x1 - x0) * ss) + 0.5) / ss
    inside = (sy[:, None] - cy) ** 2 + (sx[None, :] - cx) ** 2 <= r * r
    cov[y0:y1, x0:x1] = inside.reshape(y1 - y0, ss, x1 - x0, ss).mean(axis=(1, 3))
    return cov


def _render_frame(params, t, h, w):
    """One HR frame of a textured dead-leaves scene: discs painted back to front."""
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64) + 0.5
    img = _fill(params["bg"], t, yy, xx, max(h, w))
    for leaf in params["leaves"]:
        cov = _coverage(leaf, t, h, w)[None]
        if cov.any():
            img = img * (1 - cov) + _fill(leaf, t, yy, xx, 2 * leaf["r"]) * cov
    return np.clip(img, 0, 1)[None]


def _texture(rng, h, w, amp):
    return {
        "spec": _pink_spectrum(rng, h, w, rng.uniform(0.9, 1.3)),
        "vy": rng.uniform(-1.5, 1.5),
        "vx": rng.uniform(-1.5, 1.5),
        "amp": amp,
    }


def _sequence_params(rng, h, w):
    bg = {
        "c0": rng.uniform(0.2, 0.8, 3),
        "c1": rng.uniform(0.2, 0.8, 3),
        "angle": rng.uniform(0, 2 * np.pi),
        "texture": _texture(rng, h, w, rng.uniform(0.03, 0.08)),
    }
    leaves = []
    r_min, r_max = 3.0, min(h, w) / 3
    for _ in range(int(rng.integers(15, 30))):
        # radii follow the scale-invariant 1/r^3 density of the dead-leaves model
        u = rng.uniform()
        r = 1.0 / np.sqrt(u / r_max**2 + (1 - u) / r_min**2)
        leaves.append(
            {
                "cy": rng.uniform(0, h),
                "cx": rng.uniform(0, w),
                "vy": rng.uniform(-1.5, 1.5),
                "vx": rng.uniform(-1.5, 1.5),
                "r": r,
                "c0": rng.uniform(0.05, 0.95, 3),
                "c1": rng.uniform(0.05, 0.95, 3),
                "angle": rng.uniform(0, 2 * np.pi),
                "texture": _texture(rng, h, w, rng.uniform(0.0, 0.06)) if rng.uniform() < 0.5 else None,
            }
        )
        if leaves[-1]["texture"] is not None:  # texture is painted on the leaf and moves with it
            leaves[-1]["texture"].update(vy=leaves[-1]["vy"], vx=leaves[-1]["vx"])
    return {"bg": bg, "leaves": leaves}


def make_desk_dataset(
    root,
    n_sequences: int = 20,
    n_frames: int = 6,
    frame_size=(128, 192),
    seed: int = 0,
    split_counts=None,
) -> DatasetIndex:
    """Write seeded synthetic sequences (textured dead-leaves scenes with moving discs) in the on-disk layout."""
    root = Path(root)
    h, w = frame_size
    if h % SCALE or w % SCALE:
        raise DataError("desk frame size must be divisible by 4")
    if split_counts is None:
        n_val = max(1, n_sequences // 10)
        split_counts = {"train": n_sequences - 2 * n_val, "val": n_val, "test": n_val}
    if sum(split_counts.values()) != n_sequences:
        raise DataError(f"split counts {split_counts} do not sum to {n_sequences}")
    rng = np.random.default_rng([DESK_VERSION, seed])
    k = 0
    for split in SPLITS:
        for _ in range(split_counts.get(split, 0)):
            params = _sequence_params(rng, h, w)
            seq_id = f"{k:03d}"
            for t in range(n_frames):
                hr = _render_frame(params, t, h, w)
                hr8 = to_uint8(hr)
                hr_q = hr8.transpose(2, 0, 1)[None].astype(np.float64) / 255.0
                encode_image(hr_q, root / split / seq_id / f"{t:08d}.png")
                encode_image(make_lr(hr_q), root / f"{split}_lr" / seq_id / f"{t:08d}.png")
            k += 1
    (root / "DESK_VERSION").write_text(f"{DESK_VERSION} seed={seed}\n")
    return scan_dataset(root)
