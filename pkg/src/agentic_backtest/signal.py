"""Price-action components, model-quality weighting, regimes and blending.

Components and regimes read unscaled raw feature columns so the fixed
thresholds (0.1% trend strength and so on) keep their return units.
"""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataError, ParameterError, SchemaError
from .features import _kernels as K
from .features.frame import FeatureFrame

MOMENTUM_WEIGHTS = (0.4, 0.4, 0.2)  # 1-, 5-, 15-bar returns
MOMENTUM_SCALE = 10.0
MEANREV_WEIGHTS = (0.5, 0.5)  # 20- and 60-bar z-scores
MEANREV_SCALE = 5.0
BREAKOUT_VALUE = 3.0
TREND_SCALE = 100.0
ACCEL_SCALE = 20.0

ALIGNMENT_MIN = 0.75
STRONG_STRENGTH = 0.001
SIDEWAYS_STRENGTH = 0.0005
SIDEWAYS_VOL_RATIO = 1.2
HIGHVOL_RATIO = 1.5

QUALITY_WINDOW = 1440

REQUIRED_COLUMNS = ("mom_1", "mom_5", "mom_15", "z_20", "z_60", "breakout_20", "trend_alignment",
                    "trend_signed", "trend_strength", "accel_5", "vol_ratio")


class Regime(str, enum.Enum):
    STRONG_TREND = "StrongTrend"
    BREAKOUT = "Breakout"
    SIDEWAYS = "Sideways"
    HIGH_VOL = "HighVol"
    MIXED = "Mixed"

    def __str__(self) -> str:
        return self.value


DEFAULT_ORDER = (Regime.STRONG_TREND, Regime.BREAKOUT, Regime.SIDEWAYS, Regime.HIGH_VOL)


@dataclass(frozen=True)
class PriceActionComponents:
    momentum: float
    mean_reversion: float
    breakout: float
    trend_following: float
    acceleration: float

    def __post_init__(self):
        if self.breakout not in (-BREAKOUT_VALUE, 0.0, BREAKOUT_VALUE):
            raise ParameterError(f"breakout must be in {{-3, 0, 3}}, got {self.breakout}", module="signal")


@dataclass(frozen=True)
class BlendedSignal:
    raw: float
    model_weight: float
    regime: Regime
    quality: float
    price_action: float = 0.0


def _require(frame: FeatureFrame, cols: Sequence[str] = REQUIRED_COLUMNS):
    missing = [c for c in cols if c not in frame]
    if missing:
        raise SchemaError(f"signal needs columns {missing}", module="signal")


def components_from_values(r1, r5, r15, z20, z60, breakout_flag, alignment, trend_signed, accel5):
    """Vectorizable component formulas (works on scalars or arrays).

    The trend term carries the sign of the cross-horizon mean return so that
    it points in the direction of the trend; its size is alignment times
    strength as usual.
    """
    w1, w5, w15 = MOMENTUM_WEIGHTS
    momentum = MOMENTUM_SCALE * (w1 * r1 + w5 * r5 + w15 * r15)
    mean_rev = MEANREV_SCALE * (MEANREV_WEIGHTS[0] * z20 + MEANREV_WEIGHTS[1] * z60)
    breakout = BREAKOUT_VALUE * np.sign(breakout_flag)
    trend = TREND_SCALE * alignment * trend_signed
    accel = ACCEL_SCALE * accel5
    return momentum, mean_rev, breakout, trend, accel


def price_action(frame: FeatureFrame, t: int) -> PriceActionComponents:
    """Components at row ``t`` of an unscaled raw feature frame."""
    _require(frame)
    row = {c: float(frame[c][t]) for c in REQUIRED_COLUMNS}
    bad = [c for c, v in row.items() if not math.isfinite(v)]
    if bad:
        raise DataError(f"columns {bad} not valid at row {t}", module="signal")
    m, mr, b, tr, a = components_from_values(row["mom_1"], row["mom_5"], row["mom_15"], row["z_20"],
                                             row["z_60"], row["breakout_20"], row["trend_alignment"],
                                             row["trend_signed"], row["accel_5"])
    return PriceActionComponents(float(m), float(mr), float(b) + 0.0, float(tr), float(a))


def price_action_arrays(frame: FeatureFrame) -> dict[str, np.ndarray]:
    """All five components for every row (NaN where inputs are not yet valid)."""
    _require(frame)
    m, mr, b, tr, a = components_from_values(
        frame["mom_1"], frame["mom_5"], frame["mom_15"], frame["z_20"], frame["z_60"],
        frame["breakout_20"], frame["trend_alignment"], frame["trend_signed"], frame["accel_5"])
    return {"momentum": m, "mean_reversion": mr, "breakout": b, "trend_following": tr, "acceleration": a}


def w_model(q: float) -> float:
    """Model weight: 0.10 below 0.05, 0.20 on [0.05, 0.10), 0.40 from 0.10."""
    if not (q >= 0):
        raise ParameterError(f"quality must be >= 0, got {q}", module="signal")
    if q < 0.05:
        return 0.10
    if q < 0.10:
        return 0.20
    return 0.40


def w_model_array(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if (q < 0).any() or np.isnan(q).any():
        raise ParameterError("quality must be >= 0", module="signal")
    return np.where(q < 0.05, 0.10, np.where(q < 0.10, 0.20, 0.40))


def _classify(alignment, strength, breakout_flag, vol_ratio, order) -> Regime:
    tests = {
        Regime.STRONG_TREND: alignment > ALIGNMENT_MIN and strength > STRONG_STRENGTH,
        Regime.BREAKOUT: breakout_flag != 0,
        Regime.SIDEWAYS: strength < SIDEWAYS_STRENGTH and vol_ratio > SIDEWAYS_VOL_RATIO,
        Regime.HIGH_VOL: vol_ratio > HIGHVOL_RATIO,
    }
    for kind in order:
        if tests[kind]:
            return kind
    return Regime.MIXED


def classify_values(alignment: float, strength: float, breakout_flag: float, vol_ratio: float,
                    order: Sequence[Regime] = DEFAULT_ORDER) -> Regime:
    return _classify(alignment, strength, breakout_flag, vol_ratio, order)


def classify_regime(frame: FeatureFrame, t: int, order: Sequence[Regime] = DEFAULT_ORDER) -> Regime:
    _require(frame, ("trend_alignment", "trend_strength", "breakout_20", "vol_ratio"))
    return _classify(float(frame["trend_alignment"][t]), float(frame["trend_strength"][t]),
                     float(frame["breakout_20"][t]), float(frame["vol_ratio"][t]), order)


def classify_regimes(frame: FeatureFrame, order: Sequence[Regime] = DEFAULT_ORDER) -> np.ndarray:
    """Regime per row as an object array of :class:`Regime`."""
    _require(frame, ("trend_alignment", "trend_strength", "breakout_20", "vol_ratio"))
    al, st = frame["trend_alignment"], frame["trend_strength"]
    bo, vr = frame["breakout_20"], frame["vol_ratio"]
    return np.array([_classify(al[i], st[i], bo[i], vr[i], order) for i in range(len(al))], dtype=object)


def regime_mix(c: PriceActionComponents | dict, regime: Regime) -> float:
    """Scalar price-action signal from the regime's component mix."""
    if isinstance(c, PriceActionComponents):
        m, mr, b, tr, a = c.momentum, c.mean_reversion, c.breakout, c.trend_following, c.acceleration
    else:
        m, mr, b, tr, a = (c["momentum"], c["mean_reversion"], c["breakout"], c["trend_following"],
                           c["acceleration"])
    regime = Regime(regime)
    if regime is Regime.STRONG_TREND:
        return 1.5 * (m + tr)
    if regime is Regime.BREAKOUT:
        return 2.0 * b + a
    if regime is Regime.SIDEWAYS:
        return 1.2 * mr + m
    return 0.7 * m + 0.3 * tr


def blend(standardized_prediction: float, q: float, price_action_value: float) -> float:
    """``w * z + (1 - w) * priceAction`` with ``w = w_model(q)``."""
    if not (math.isfinite(standardized_prediction) and math.isfinite(price_action_value)):
        raise DataError("non-finite input to blend", module="signal")
    w = w_model(q)
    return w * standardized_prediction + (1.0 - w) * price_action_value


def standardize_predictions(preds: np.ndarray, history: np.ndarray | None = None,
                            window: int = QUALITY_WINDOW) -> tuple[np.ndarray, np.ndarray]:
    """Standardize each prediction by the std of the ``window`` predictions before it.

    ``history`` seeds the window (e.g. predictions on the validation slice).
    Returns ``(z, sigma)``; z is 0 where sigma is 0 or fewer than two prior
    predictions exist.
    """
    preds = np.asarray(preds, dtype=float)
    hist = np.zeros(0) if history is None else np.asarray(history, dtype=float)
    allp = np.concatenate([hist, preds])
    sd = K.rolling_std(allp, window)
    # partial windows while the history is short
    for i in range(min(window - 1, len(allp))):
        sd[i] = np.std(allp[: i + 1]) if i >= 1 else np.nan
    prior = np.full(len(allp), np.nan)
    prior[1:] = sd[:-1]
    sigma = prior[len(hist):]
    z = np.zeros(len(preds))
    ok = np.isfinite(sigma) & (sigma > 0)
    z[ok] = preds[ok] / sigma[ok]
    return z, sigma


@dataclass
class SignalTrace:
    timestamps: np.ndarray
    regimes: np.ndarray
    quality: np.ndarray
    model_weight: np.ndarray
    price_action: np.ndarray
    raw: np.ndarray
    momentum: np.ndarray
    standardized: np.ndarray

    def __len__(self) -> int:
        return len(self.timestamps)

    def to_csv(self, path: str | Path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["timestamp", "regime", "quality", "model_weight", "price_action", "raw"])
            for i in range(len(self)):
                w.writerow([int(self.timestamps[i]), str(self.regimes[i]), repr(float(self.quality[i])),
                            repr(float(self.model_weight[i])), repr(float(self.price_action[i])),
                            repr(float(self.raw[i]))])
        return path

    @classmethod
    def concat(cls, parts: Sequence["SignalTrace"]) -> "SignalTrace":
        return cls(*[np.concatenate([getattr(p, f) for p in parts]) for f in
                     ("timestamps", "regimes", "quality", "model_weight", "price_action", "raw",
                      "momentum", "standardized")])


def build_signal(frame: FeatureFrame, rows: np.ndarray, predictions: np.ndarray,
                 history: np.ndarray | None = None, order: Sequence[Regime] = DEFAULT_ORDER) -> SignalTrace:
    """Blended signal on ``rows`` of a raw feature frame given model predictions for those rows."""
    rows = np.asarray(rows, dtype=np.int64)
    preds = np.asarray(predictions, dtype=float)
    if len(rows) != len(preds):
        raise SchemaError("rows and predictions differ in length", module="signal")
    if not np.isfinite(preds).all():
        raise DataError("non-finite predictions", module="signal")
    sub = frame.rows(rows)
    comps = price_action_arrays(sub)
    bad = ~np.all(np.isfinite(np.column_stack(list(comps.values()))), axis=1)
    if bad.any():
        raise DataError(f"price-action inputs invalid on {int(bad.sum())} rows", module="signal")
    regimes = classify_regimes(sub, order)
    z, _ = standardize_predictions(preds, history)
    q = np.abs(z)
    w = w_model_array(q)
    pa = np.array([regime_mix({k: v[i] for k, v in comps.items()}, regimes[i]) for i in range(len(rows))])
    raw = w * z + (1.0 - w) * pa
    return SignalTrace(sub.timestamps.copy(), regimes, q, w, pa, raw, comps["momentum"], z)
