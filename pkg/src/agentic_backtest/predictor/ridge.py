"""Closed-form ridge regression with an unpenalized intercept."""
from __future__ import annotations

from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ..errors import DataError, ParameterError
from .model import FittedModel, default_names, normalize_importances


def _check_xy(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise DataError(f"shape mismatch X{X.shape} y{y.shape}", module="predictor")
    if X.shape[0] == 0:
        raise DataError("empty training set", module="predictor")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise DataError("non-finite values in ridge inputs", module="predictor")
    return X, y


def fit_ridge(X, y, lam: float = 1.0, feature_names: Sequence[str] | None = None) -> FittedModel:
    """Minimize ``|y - Xw - b|^2 + lam |w|^2``.

    Inputs are centered so the intercept stays unpenalized; nothing is
    rescaled. ``lam = 0`` falls back to the minimum-norm least-squares fit.
    """
    if not (lam >= 0):
        raise ParameterError(f"lambda must be >= 0, got {lam}", module="predictor")
    X, y = _check_xy(X, y)
    names = default_names(X.shape[1], feature_names)
    xm = X.mean(axis=0)
    ym = float(y.mean())
    Xc = X - xm
    yc = y - ym
    A = Xc.T @ Xc
    if lam > 0:
        A[np.diag_indices_from(A)] += lam
        try:
            w = np.linalg.solve(A, Xc.T @ yc)
        except np.linalg.LinAlgError:
            w = np.linalg.lstsq(A, Xc.T @ yc, rcond=None)[0]
    else:
        w = np.linalg.lstsq(Xc, yc, rcond=None)[0]
    b = ym - float(xm @ w)
    w.setflags(write=False)
    loss = float(np.mean((X @ w + b - y) ** 2))
    return FittedModel("ridge", {"coef": w, "intercept": b}, normalize_importances(np.abs(w), names),
                       (loss,), 0, 0, names, {"lambda": float(lam)})


class RidgeRegressor(RegressorMixin, BaseEstimator):
    """Estimator face of :func:`fit_ridge`; ``alpha`` is the penalty."""

    def __init__(self, alpha: float = 1.0):
        self.alpha = alpha

    def fit(self, X, y, feature_names: Sequence[str] | None = None):
        if feature_names is None and hasattr(X, "columns"):
            feature_names = [str(c) for c in X.columns]
        self.model_ = fit_ridge(np.asarray(X, dtype=float), y, self.alpha, feature_names)
        self.coef_ = np.asarray(self.model_.parameters["coef"])
        self.intercept_ = self.model_.parameters["intercept"]
        self.n_features_in_ = self.coef_.shape[0]
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        return self.model_.predict(np.asarray(X, dtype=float))

    @property
    def feature_importances_(self):
        check_is_fitted(self, "model_")
        return np.array(list(self.model_.importances.values()))
