"""Target portfolios, turnover control and baseline strategies."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from .errors import ParameterError

CRYPTO_TURNOVER = 0.50
EQUITY_TURNOVER = 0.20


@dataclass(frozen=True)
class TargetPortfolio:
    weights: Mapping[str, float]
    as_of: int = 0
    notes: Mapping[str, object] = field(default_factory=dict)

    @property
    def gross(self) -> float:
        return float(sum(abs(w) for w in self.weights.values()))

    @property
    def net(self) -> float:
        return float(sum(self.weights.values()))

    def weight(self, symbol: str) -> float:
        return float(self.weights.get(symbol, 0.0))

    def to_dict(self) -> dict:
        return {"asOf": int(self.as_of), "weights": {k: float(v) for k, v in sorted(self.weights.items())},
                "gross": self.gross, "net": self.net, "notes": dict(self.notes)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


@dataclass(frozen=True)
class TurnoverBudget:
    limit: float = CRYPTO_TURNOVER
    used: float = 0.0

    def __post_init__(self):
        if not (self.limit > 0):
            raise ParameterError("turnover limit must be positive", module="portfolio")


def turnover(prev: TargetPortfolio, proposed: TargetPortfolio) -> float:
    names = set(prev.weights) | set(proposed.weights)
    return float(sum(abs(proposed.weight(s) - prev.weight(s)) for s in names))


def long_flat_target(risk_position: float, symbol: str = "BTCUSDT", as_of: int = 0,
                     cap: float = 0.05) -> TargetPortfolio:
    """Clip a signed risk position to ``[0, cap]``."""
    w = min(cap, max(0.0, float(risk_position)))
    return TargetPortfolio({symbol: w}, as_of)


def enforce_turnover(prev: TargetPortfolio, proposed: TargetPortfolio,
                     budget: TurnoverBudget) -> tuple[TargetPortfolio, TurnoverBudget]:
    """Scale every weight change by ``limit / sum|dw|`` when the sum exceeds the limit."""
    names = sorted(set(prev.weights) | set(proposed.weights))
    total = turnover(prev, proposed)
    if total <= budget.limit:
        out = replace(proposed, notes={**proposed.notes, "turnoverRespected": True})
        return out, replace(budget, used=total)
    k = budget.limit / total
    w = {s: prev.weight(s) + k * (proposed.weight(s) - prev.weight(s)) for s in names}
    out = TargetPortfolio(w, proposed.as_of, {**proposed.notes, "turnoverRespected": True,
                                              "turnoverScaled": k})
    return out, replace(budget, used=budget.limit)


def iso_weeks(timestamps: np.ndarray) -> np.ndarray:
    """ISO (year, week) key per UTC millisecond timestamp, as ``year * 100 + week``."""
    idx = pd.to_datetime(np.asarray(timestamps, dtype=np.int64), unit="ms", utc=True)
    iso = idx.isocalendar()
    return (iso["year"].to_numpy(dtype=np.int64) * 100 + iso["week"].to_numpy(dtype=np.int64))


def equal_weight_weekly(universe: Sequence[str], timestamps: np.ndarray) -> list[tuple[int, TargetPortfolio]]:
    """Rebalance to ``1/N`` at the first bar of every ISO week (UTC)."""
    if not universe:
        raise ParameterError("universe must be non-empty", module="portfolio")
    ts = np.asarray(timestamps, dtype=np.int64)
    if len(ts) == 0:
        return []
    weeks = iso_weeks(ts)
    first = np.flatnonzero(np.r_[True, weeks[1:] != weeks[:-1]])
    w = 1.0 / len(universe)
    return [(int(i), TargetPortfolio({s: w for s in universe}, int(ts[i]), {"rebalance": "weekly"}))
            for i in first]


def buy_and_hold(symbol: str, timestamps: np.ndarray) -> list[tuple[int, TargetPortfolio]]:
    """Full weight at the first bar, never traded again."""
    ts = np.asarray(timestamps, dtype=np.int64)
    if len(ts) == 0:
        return []
    return [(0, TargetPortfolio({symbol: 1.0}, int(ts[0]), {"rebalance": "once"}))]


def signal_weights(scores: Mapping[str, float], *, gross: float = 1.0, long_only: bool = True,
                   cap: float = 1.0, as_of: int = 0) -> TargetPortfolio:
    """Weights proportional to scores, normalized to ``gross`` and capped per name."""
    s = {k: (max(v, 0.0) if long_only else v) for k, v in scores.items() if math.isfinite(v)}
    tot = sum(abs(v) for v in s.values())
    if tot == 0:
        return TargetPortfolio({k: 0.0 for k in scores}, as_of)
    w = {k: max(-cap, min(cap, gross * v / tot)) for k, v in s.items()}
    return TargetPortfolio({k: w.get(k, 0.0) for k in scores}, as_of)
