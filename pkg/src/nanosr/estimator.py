"""scikit-learn style wrapper around the zoo, trainer and metrics.

    est = SuperResolver("xjtu", stages=[{"iterations": 200, "lr": 1e-3, "patch": 32}])
    est.fit(lr_patches, hr_patches)      # (n, 3, h, w) and (n, 3, 4h, 4w)
    est.predict(lr_frames)               # (n, 3, 4h, 4w), values in [0, 1]
    est.score(lr_frames, hr_frames)      # mean per-image PSNR in dB

``fit`` also accepts a dataset root or DatasetIndex in place of arrays.
Recurrent archs read the n axis of ``predict`` input as time.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_is_fitted

from . import data as D
from .eval import psnr
from .tensor import ShapeError
from .train import Stage, desk_stage, recipe, run_recipe
from .zoo import build_model, forward_model, run_sequence

__all__ = ["SuperResolver", "NotFittedError"]


def _frames(X, name="X") -> np.ndarray:
    x = np.asarray(X, dtype=np.float32)
    if x.ndim == 3:
        x = x[None]
    if x.ndim != 4 or x.shape[1] != 3:
        raise ShapeError(f"{name} must be (n, 3, h, w) or (3, h, w), got {np.shape(X)}")
    if x.shape[0] == 0:
        raise ShapeError(f"{name} is empty")
    if not np.isfinite(x).all():
        raise ValueError(f"{name} contains NaN or inf")
    return x


def _pairs(X, y, scale=D.SCALE):
    lr, hr = _frames(X, "X"), _frames(y, "y")
    n, _, h, w = lr.shape
    if hr.shape != (n, 3, h * scale, w * scale):
        raise ShapeError(f"y must be {(n, 3, h * scale, w * scale)} for X {lr.shape}, got {hr.shape}")
    return lr, hr


class SuperResolver(BaseEstimator):
    """x4 super-resolution estimator backed by one zoo architecture.

    Parameters
    ----------
    arch : zoo architecture id.
    model_config : overrides of the arch's card defaults.
    stages : list of Stage or stage mappings; None uses the arch's recipe.
    desk : scale the stages down for a CPU run.
    seed : init and batch-sampling seed.
    init : weight init scheme for the untrained model.
    """

    def __init__(self, arch="xjtu", model_config=None, stages=None, desk=True, seed=0, init="uniform-fan-in"):
        self.arch = arch
        self.model_config = model_config
        self.stages = stages
        self.desk = desk
        self.seed = seed
        self.init = init

    def _stages(self):
        if self.stages is None:
            return recipe(self.arch, desk=self.desk)
        out = [s if isinstance(s, Stage) else Stage.from_dict(dict(s)) for s in self.stages]
        return [desk_stage(s) for s in out] if self.desk else out

    def _model_cfg(self):
        return dict(self.model_config or {}, seed=self.seed, init=self.init)

    def fit(self, X, y=None):
        """Train from arrays (X low-res, y high-res) or from a dataset root / DatasetIndex."""
        if isinstance(X, (str, Path)):
            X = D.scan_dataset(X)
        if isinstance(X, D.DatasetIndex):
            if y is not None:
                raise ValueError("y must be None when fitting on a dataset")
            source = X
        else:
            if y is None:
                raise ValueError("fitting on arrays needs y")
            if build_model(self.arch, self.model_config).recurrent:
                raise ValueError(f"{self.arch} is recurrent; fit it on a dataset of sequences")
            lr, hr = _pairs(X, y)
            source = [D.PatchPair(lr[i : i + 1], hr[i : i + 1], ("array", i, 0, 0)) for i in range(len(lr))]
        self.graph_, self.logs_ = run_recipe(self.arch, self._stages(), source, seed=self.seed, config=self._model_cfg())
        self.n_features_in_ = 3
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "graph_")
        x = _frames(X)
        if self.graph_.recurrent:
            out = np.concatenate(run_sequence(self.graph_, [f[None] for f in x]), axis=0)
        else:
            out = forward_model(self.graph_, x)
        return np.clip(out, 0.0, 1.0)

    def score(self, X, y) -> float:
        """Mean per-image PSNR (dB) of predict(X) against y."""
        lr, hr = _pairs(X, y)
        pred = self.predict(lr)
        return float(np.mean([psnr(p, t) for p, t in zip(pred, hr)]))
