"""Smoothing, robust scaling, variance and importance filtering."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ..errors import DegenerateFitError, ParameterError, SchemaError
from . import _kernels as K
from .frame import FeatureFrame

EWM_ALPHA = 0.4
VARIANCE_THRESHOLD = 0.01
KEEP_FRACTION = 0.70


def ewm_smooth(frame: FeatureFrame, alpha: float = EWM_ALPHA) -> FeatureFrame:
    """Exponentially smooth every column, seeding each at its first finite value."""
    if not (0.0 < alpha <= 1.0):
        raise ParameterError(f"alpha must be in (0, 1], got {alpha}", module="features")
    if alpha == 1.0:
        return frame
    values = K.ewm_columns(np.ascontiguousarray(frame.values), float(alpha))
    return frame.with_values(values)


@dataclass(frozen=True)
class PreprocessState:
    ewm_alpha: float
    columns: tuple[str, ...]
    robust_centers: dict[str, float]
    robust_scales: dict[str, float]
    variance_threshold: float
    keep_fraction: float
    kept_columns: tuple[str, ...]
    dropped: dict[str, str]

    def to_dict(self) -> dict:
        return {
            "ewmAlpha": self.ewm_alpha,
            "columns": list(self.columns),
            "robustCenters": self.robust_centers,
            "robustScales": self.robust_scales,
            "varianceThreshold": self.variance_threshold,
            "keepFraction": self.keep_fraction,
            "keptColumns": list(self.kept_columns),
            "dropped": self.dropped,
        }


def keep_count(n: int, fraction: float) -> int:
    # round away float noise first: 0.7 * 10 must give 7, not 8
    return min(n, math.ceil(round(fraction * n, 9)))


def robust_center_scale(x: np.ndarray) -> tuple[float, float]:
    """Median and IQR; zero IQR falls back to MAD; returns scale 0 if both vanish."""
    x = x[np.isfinite(x)]
    if len(x) == 0:
        return math.nan, 0.0
    med = float(np.median(x))
    q25, q75 = np.percentile(x, [25, 75])
    scale = float(q75 - q25)
    if scale <= 0:
        scale = float(np.median(np.abs(x - med)))
    return med, scale


def fit_preprocess(frame: FeatureFrame, window: tuple[int, int] | slice | np.ndarray,
                   importances: Mapping[str, float] | None = None, *,
                   ewm_alpha: float = EWM_ALPHA,
                   variance_threshold: float = VARIANCE_THRESHOLD,
                   keep_fraction: float = KEEP_FRACTION) -> PreprocessState:
    """Fit centers/scales and the kept column set on rows ``window`` only.

    ``window`` is a ``(start, stop)`` row range, a slice, or an index array.
    Columns absent from ``importances`` rank with importance 0; ties keep
    column order. ``importances=None`` means uniform.
    """
    if isinstance(window, tuple):
        window = slice(*window)
    rows = frame.values[window]
    if rows.shape[0] == 0:
        raise DegenerateFitError("fit window is empty", hint="widen the training window")
    centers, scales, dropped = {}, {}, {}
    survivors = []
    for j, name in enumerate(frame.columns):
        col = rows[:, j]
        med, scale = robust_center_scale(col)
        if not (scale > 0):
            dropped[name] = "zero-scale"
            continue
        z = (col[np.isfinite(col)] - med) / scale
        if float(np.var(z)) < variance_threshold:
            dropped[name] = "low-variance"
            continue
        centers[name], scales[name] = med, scale
        survivors.append(name)
    if not survivors:
        raise DegenerateFitError("every column was dropped by the scale/variance filters",
                                 hint="check the fit window contains varying data")
    imp = importances or {}
    order = sorted(range(len(survivors)),
                   key=lambda i: (-float(imp.get(survivors[i], 0.0) if importances is not None else 1.0), i))
    k = keep_count(len(survivors), keep_fraction)
    kept_idx = sorted(order[:k])
    kept = tuple(survivors[i] for i in kept_idx)
    for name in survivors:
        if name not in kept:
            dropped[name] = "low-importance"
    return PreprocessState(
        ewm_alpha=ewm_alpha,
        columns=tuple(frame.columns),
        robust_centers={n: centers[n] for n in kept},
        robust_scales={n: scales[n] for n in kept},
        variance_threshold=variance_threshold,
        keep_fraction=keep_fraction,
        kept_columns=kept,
        dropped=dropped,
    )


def apply_preprocess(frame: FeatureFrame, state: PreprocessState) -> FeatureFrame:
    """Scale kept columns with the stored constants; drop everything else."""
    missing = [c for c in state.kept_columns if c not in frame]
    if missing:
        raise SchemaError(f"frame lacks kept columns {missing}", module="features")
    sub = frame.select(state.kept_columns)
    centers = np.array([state.robust_centers[c] for c in state.kept_columns])
    scales = np.array([state.robust_scales[c] for c in state.kept_columns])
    return sub.with_values((sub.values - centers) / scales)


class RobustPreprocessor(TransformerMixin, BaseEstimator):
    """Estimator wrapper around :func:`fit_preprocess` / :func:`apply_preprocess`.

    Accepts a :class:`FeatureFrame`; ``fit`` uses every row passed, so slice the
    training window before calling it.
    """

    def __init__(self, variance_threshold: float = VARIANCE_THRESHOLD,
                 keep_fraction: float = KEEP_FRACTION, ewm_alpha: float = EWM_ALPHA):
        self.variance_threshold = variance_threshold
        self.keep_fraction = keep_fraction
        self.ewm_alpha = ewm_alpha

    def fit(self, X: FeatureFrame, y=None, importances: Mapping[str, float] | None = None):
        if not (0 < self.keep_fraction <= 1):
            raise ParameterError("keep_fraction must be in (0, 1]", module="features")
        self.state_ = fit_preprocess(X, slice(None), importances, ewm_alpha=self.ewm_alpha,
                                     variance_threshold=self.variance_threshold,
                                     keep_fraction=self.keep_fraction)
        self.feature_names_out_ = self.state_.kept_columns
        return self

    def transform(self, X: FeatureFrame) -> FeatureFrame:
        check_is_fitted(self, "state_")
        return apply_preprocess(X, self.state_)

    def get_feature_names_out(self, input_features: Sequence[str] | None = None):
        check_is_fitted(self, "state_")
        return np.asarray(self.feature_names_out_, dtype=object)
