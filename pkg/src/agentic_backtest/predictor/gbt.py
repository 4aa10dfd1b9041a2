"""Histogram gradient-boosted regression trees (squared loss)."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, fields
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ..errors import DataError, ParameterError
from . import _tree
from .model import FittedModel, Tree, default_names, normalize_importances

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GbtConfig:
    trees: int = 300
    max_depth: int = 6
    learning_rate: float = 0.08
    subsample: float = 0.8
    colsample: float = 0.8
    l1: float = 0.01
    l2: float = 0.05
    min_child_weight: float = 1.0
    gamma: float = 0.0
    hist_bins: int = 512
    early_stop_patience: int = 20

    def __post_init__(self):
        if self.trees < 1:
            raise ParameterError("trees must be >= 1", module="predictor")
        if self.max_depth < 1:
            raise ParameterError("max_depth must be >= 1", module="predictor")
        # zero is allowed so a no-step model can be expressed
        if not (0.0 <= self.learning_rate <= 1.0):
            raise ParameterError("learning_rate must be in [0, 1]", module="predictor")
        for name in ("subsample", "colsample"):
            v = getattr(self, name)
            if not (0.0 < v <= 1.0):
                raise ParameterError(f"{name} must be in (0, 1]", module="predictor")
        if self.hist_bins < 2 or self.hist_bins > 65535:
            raise ParameterError("hist_bins must be in [2, 65535]", module="predictor")
        if self.l1 < 0 or self.l2 < 0 or self.gamma < 0 or self.min_child_weight < 0:
            raise ParameterError("regularization terms must be >= 0", module="predictor")
        if self.early_stop_patience < 1:
            raise ParameterError("early_stop_patience must be >= 1", module="predictor")

    _CAMEL = {"trees": "trees", "max_depth": "maxDepth", "learning_rate": "learningRate",
              "subsample": "subsample", "colsample": "colsample", "l1": "l1", "l2": "l2",
              "min_child_weight": "minChildWeight", "gamma": "gamma", "hist_bins": "histBins",
              "early_stop_patience": "earlyStopPatience"}

    def to_dict(self) -> dict:
        return {self._CAMEL[k]: v for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d: dict) -> "GbtConfig":
        back = {v: k for k, v in cls._CAMEL.items()}
        names = {f.name for f in fields(cls)}
        kw = {}
        for k, v in d.items():
            key = back.get(k, k)
            if key not in names:
                raise ParameterError(f"unknown GBT option {k!r}", module="predictor")
            kw[key] = v
        return cls(**kw)




def bin_edges(col: np.ndarray, max_bins: int) -> np.ndarray:
    """Split candidates for one column: midpoints of distinct values when few, else quantiles."""
    u = np.unique(col)
    if len(u) <= max_bins:
        return (u[:-1] + u[1:]) / 2.0
    q = np.quantile(col, np.linspace(0.0, 1.0, max_bins + 1)[1:-1])
    return np.unique(q)


def bin_matrix(X: np.ndarray, edges: Sequence[np.ndarray]) -> np.ndarray:
    out = np.empty(X.shape, dtype=np.uint16)
    for j, e in enumerate(edges):
        out[:, j] = np.searchsorted(e, X[:, j], side="left")
    return out


def _as_xy(X, y, what):
    X = np.ascontiguousarray(X, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise DataError(f"{what}: shape mismatch X{X.shape} y{y.shape}", module="predictor")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise DataError(f"{what}: non-finite values", module="predictor")
    return X, y


def tree_rng(seed: int, tree_index: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(tree_index)])


def fit_gbt(X, y, Xval=None, yval=None, config: GbtConfig | None = None, seed: int = 0,
            feature_names: Sequence[str] | None = None) -> FittedModel:
    """Boost up to ``config.trees`` trees; stop early on a stalled validation loss.

    Rows are subsampled and columns drawn per tree from an RNG seeded with
    ``(seed, tree_index)``. The returned model is truncated to the round with
    the best validation loss; ``train_loss_curve`` covers every round run.
    """
    cfg = config or GbtConfig()
    X, y = _as_xy(X, y, "training set")
    n, p = X.shape
    if n == 0:
        raise DataError("empty training set", module="predictor")
    names = default_names(p, feature_names)
    has_val = Xval is not None and yval is not None and len(yval) > 0
    if has_val:
        Xval, yval = _as_xy(Xval, yval, "validation set")
        if Xval.shape[1] != p:
            raise DataError("validation set has a different column count", module="predictor")

    edges = [bin_edges(X[:, j], cfg.hist_bins) for j in range(p)]
    thresholds = [np.append(e, np.inf) for e in edges]
    n_bins = np.array([len(e) + 1 for e in edges], dtype=np.int64)
    binned = bin_matrix(X, edges)
    bval = bin_matrix(Xval, edges) if has_val else None

    base = float(y.mean())
    pred = np.full(n, base)
    hess = np.ones(n)
    curve = [float(np.mean((pred - y) ** 2))]
    vpred = np.full(len(yval), base) if has_val else None
    best_loss = float(np.mean((vpred - yval) ** 2)) if has_val else np.inf
    best_round = 0
    n_rows = max(1, int(round(cfg.subsample * n)))
    n_cols = max(1, int(round(cfg.colsample * p)))
    trees: list[Tree] = []
    stopped = 0
    for m in range(cfg.trees):
        rng = tree_rng(seed, m)
        rows = np.sort(rng.choice(n, n_rows, replace=False)) if n_rows < n else np.arange(n)
        cols = np.sort(rng.choice(p, n_cols, replace=False)) if n_cols < p else np.arange(p)
        grad = pred - y
        gs = np.zeros(n)
        hs = np.zeros(n)
        gs[rows] = grad[rows]
        hs[rows] = 1.0
        feat, bthr, left, right, value, gain, cover, leaf_of = _tree.grow_tree(
            binned, gs, hs, grad, hess, cols.astype(np.int64), n_bins, cfg.max_depth,
            cfg.l1, cfg.l2, cfg.min_child_weight, cfg.gamma, cfg.learning_rate)
        thr = np.array([thresholds[f][b] if f >= 0 else 0.0 for f, b in zip(feat, bthr)])
        trees.append(Tree(feat.copy(), thr, left.copy(), right.copy(), value.copy(), gain.copy(),
                          cover.copy()))
        pred = pred + value[leaf_of]
        curve.append(float(np.mean((pred - y) ** 2)))
        stopped = m + 1
        if has_val:
            vpred = vpred + _tree.predict_binned(bval, feat, bthr, left, right, value)
            vl = float(np.mean((vpred - yval) ** 2))
            if vl < best_loss:
                best_loss, best_round = vl, m + 1
            elif m + 1 - best_round >= cfg.early_stop_patience:
                log.debug("early stop at round %d (best %d)", m + 1, best_round)
                break
    if not has_val:
        best_round = stopped
    kept = tuple(trees[:best_round])
    imp = np.zeros(p)
    for t in kept:
        split = t.feature >= 0
        np.add.at(imp, t.feature[split], t.gain[split])
    return FittedModel(
        "gbt", {"base_score": base, "trees": kept}, normalize_importances(imp, names),
        tuple(curve), stopped, best_round, names, {**cfg.to_dict(), "seed": int(seed)})


class GBTRegressor(RegressorMixin, BaseEstimator):
    """Estimator face of :func:`fit_gbt`."""

    def __init__(self, n_estimators: int = 300, max_depth: int = 6, learning_rate: float = 0.08,
                 subsample: float = 0.8, colsample: float = 0.8, reg_alpha: float = 0.01,
                 reg_lambda: float = 0.05, min_child_weight: float = 1.0, gamma: float = 0.0,
                 max_bins: int = 512, early_stopping_rounds: int = 20, random_state: int = 0):
        self.n_estimators = n_estimators
        self.max_depth = max_depth
        self.learning_rate = learning_rate
        self.subsample = subsample
        self.colsample = colsample
        self.reg_alpha = reg_alpha
        self.reg_lambda = reg_lambda
        self.min_child_weight = min_child_weight
        self.gamma = gamma
        self.max_bins = max_bins
        self.early_stopping_rounds = early_stopping_rounds
        self.random_state = random_state

    def _config(self) -> GbtConfig:
        return GbtConfig(self.n_estimators, self.max_depth, self.learning_rate, self.subsample,
                         self.colsample, self.reg_alpha, self.reg_lambda, self.min_child_weight,
                         self.gamma, self.max_bins, self.early_stopping_rounds)

    def fit(self, X, y, eval_set=None, feature_names: Sequence[str] | None = None):
        if feature_names is None and hasattr(X, "columns"):
            feature_names = [str(c) for c in X.columns]
        Xv, yv = eval_set if eval_set is not None else (None, None)
        self.model_ = fit_gbt(np.asarray(X, dtype=float), y, Xv, yv, self._config(),
                              self.random_state, feature_names)
        self.n_features_in_ = self.model_.n_features
        self.best_iteration_ = self.model_.best_round
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        return self.model_.predict(np.asarray(X, dtype=float))

    @property
    def feature_importances_(self):
        check_is_fitted(self, "model_")
        return np.array(list(self.model_.importances.values()))
