"""Fitted model container, prediction and the versioned JSON format."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from ..errors import DataError, SchemaError
from . import _tree

FORMAT = "agentic-backtest/model"
VERSION = 1


@dataclass(frozen=True)
class Tree:
    """Flat array form of one regression tree; ``feature == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    gain: np.ndarray
    cover: np.ndarray

    def __post_init__(self):
        for name in ("feature", "threshold", "left", "right", "value", "gain", "cover"):
            arr = getattr(self, name)
            arr.setflags(write=False)

    @property
    def n_leaves(self) -> int:
        return int((self.feature < 0).sum())

    def predict(self, X: np.ndarray) -> np.ndarray:
        return _tree.predict_raw(X, self.feature, self.threshold, self.left, self.right, self.value)

    def to_record(self, names: Sequence[str], node: int = 0) -> dict:
        f = int(self.feature[node])
        if f < 0:
            return {"leaf": float(self.value[node]), "cover": float(self.cover[node])}
        return {
            "feature": f,
            "featureName": names[f] if names else str(f),
            "threshold": float(self.threshold[node]),
            "gain": float(self.gain[node]),
            "cover": float(self.cover[node]),
            "left": self.to_record(names, int(self.left[node])),
            "right": self.to_record(names, int(self.right[node])),
        }

    @classmethod
    def from_record(cls, rec: dict) -> "Tree":
        rows: list[list] = []

        def walk(r):
            i = len(rows)
            rows.append([-1, 0.0, -1, -1, 0.0, 0.0, float(r.get("cover", 0.0))])
            if "leaf" in r:
                rows[i][4] = float(r["leaf"])
                return i
            rows[i][0] = int(r["feature"])
            rows[i][1] = float(r["threshold"])
            rows[i][5] = float(r.get("gain", 0.0))
            rows[i][2] = walk(r["left"])
            rows[i][3] = walk(r["right"])
            return i

        walk(rec)
        cols = list(zip(*rows))
        return cls(np.array(cols[0], np.int32), np.array(cols[1]), np.array(cols[2], np.int32),
                   np.array(cols[3], np.int32), np.array(cols[4]), np.array(cols[5]), np.array(cols[6]))


@dataclass(frozen=True)
class FittedModel:
    """Immutable fitted ridge or GBT model.

    ``parameters`` holds ``coef``/``intercept`` for ridge and
    ``base_score``/``trees`` for gbt.
    """

    kind: str
    parameters: dict[str, Any]
    importances: dict[str, float]
    train_loss_curve: tuple[float, ...] = ()
    stopped_at_round: int = 0
    best_round: int = 0
    feature_names: tuple[str, ...] = ()
    config: dict[str, Any] = field(default_factory=dict)

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def _matrix(self, X) -> np.ndarray:
        cols = getattr(X, "columns", None)
        if cols is not None and not isinstance(X, np.ndarray):
            cols = [str(c) for c in cols]
            if list(cols) != list(self.feature_names):
                missing = [c for c in self.feature_names if c not in cols]
                if missing:
                    raise SchemaError(f"input lacks model features {missing[:5]}", module="predictor")
                X = X[list(self.feature_names)] if hasattr(X, "loc") else X.select(self.feature_names)
            X = np.asarray(X.values if hasattr(X, "values") else X, dtype=float)
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise SchemaError(f"expected {self.n_features} features, got shape {X.shape}",
                              module="predictor")
        if not np.isfinite(X).all():
            raise DataError("non-finite feature values passed to predict", module="predictor")
        return np.ascontiguousarray(X)

    def predict(self, X) -> np.ndarray:
        X = self._matrix(X)
        if self.kind == "ridge":
            return X @ self.parameters["coef"] + self.parameters["intercept"]
        out = np.full(X.shape[0], self.parameters["base_score"])
        for t in self.parameters["trees"]:
            out += t.predict(X)
        return out

    def predict_one(self, x) -> float:
        x = np.asarray(x, dtype=float)
        if x.ndim != 1:
            raise SchemaError("predict_one takes a single feature row", module="predictor")
        return float(self.predict(x)[0])

    # ------------------------------------------------------------------ io
    def to_dict(self) -> dict:
        d = {
            "format": FORMAT,
            "version": VERSION,
            "kind": self.kind,
            "config": self.config,
            "featureNames": list(self.feature_names),
            "importances": self.importances,
            "trainLossCurve": list(self.train_loss_curve),
            "stoppedAtRound": self.stopped_at_round,
            "bestRound": self.best_round,
        }
        if self.kind == "ridge":
            d["weights"] = [float(w) for w in self.parameters["coef"]]
            d["intercept"] = float(self.parameters["intercept"])
        else:
            d["baseScore"] = float(self.parameters["base_score"])
            d["trees"] = [t.to_record(self.feature_names) for t in self.parameters["trees"]]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(self.to_json())
        return path

    @classmethod
    def from_dict(cls, d: dict) -> "FittedModel":
        if d.get("format") != FORMAT or d.get("version") != VERSION:
            raise SchemaError(f"unsupported model document {d.get('format')!r} v{d.get('version')}",
                              module="predictor")
        kind = d["kind"]
        if kind == "ridge":
            coef = np.array(d["weights"], dtype=float)
            coef.setflags(write=False)
            params = {"coef": coef, "intercept": float(d["intercept"])}
        elif kind == "gbt":
            params = {"base_score": float(d["baseScore"]),
                      "trees": tuple(Tree.from_record(r) for r in d["trees"])}
        else:
            raise SchemaError(f"unknown model kind {kind!r}", module="predictor")
        return cls(kind, params, dict(d["importances"]), tuple(d["trainLossCurve"]),
                   int(d["stoppedAtRound"]), int(d.get("bestRound", 0)),
                   tuple(d["featureNames"]), dict(d.get("config", {})))

    @classmethod
    def from_json(cls, text: str) -> "FittedModel":
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path: str | Path) -> "FittedModel":
        return cls.from_json(Path(path).read_text())


def predict(model: FittedModel, x) -> float | np.ndarray:
    """Single row in, scalar out; 2-D input gives a vector."""
    arr = np.asarray(x) if not hasattr(x, "columns") else x
    if getattr(arr, "ndim", 2) == 1:
        return model.predict_one(arr)
    return model.predict(x)


def normalize_importances(raw: np.ndarray, names: Sequence[str]) -> dict[str, float]:
    raw = np.asarray(raw, dtype=float)
    total = float(raw.sum())
    if total > 0 and math.isfinite(total):
        raw = raw / total
    else:
        raw = np.zeros_like(raw)
    return {n: float(v) for n, v in zip(names, raw)}


def default_names(p: int, names: Sequence[str] | None) -> tuple[str, ...]:
    if names is None:
        return tuple(f"x{i}" for i in range(p))
    names = tuple(str(n) for n in names)
    if len(names) != p:
        raise SchemaError(f"{len(names)} feature names for {p} columns", module="predictor")
    return names
