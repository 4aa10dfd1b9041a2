"""Daily-aggregated performance metrics and FIFO trade statistics."""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from ..errors import DataError
from .engine import EquityCurve, Fill

PERIODS_PER_YEAR = {"crypto": 365, "stock": 252}
DAY_TZ = {"crypto": "UTC", "stock": "America/New_York"}
DAY_MS = 86_400_000


@dataclass(frozen=True)
class Trade:
    symbol: str
    side: int
    qty: float
    entry_ts: int
    exit_ts: int
    entry_price: float
    exit_price: float
    pnl: float  # net of the allocated entry and exit costs

    @property
    def holding_hours(self) -> float:
        return (self.exit_ts - self.entry_ts) / 3_600_000.0


@dataclass(frozen=True)
class MetricsReport:
    total_return: float
    annual_return: float
    volatility: float
    sharpe: float
    max_drawdown: float
    calmar: float | None
    turnover: float
    win_rate: float
    trades_per_day: float
    avg_holding_hours: float
    median_holding_hours: float
    avg_daily_return: float
    # supplementary fields
    n_trades: int = 0
    n_days: int = 0
    sharpe_daily: float = 0.0
    daily_win_rate: float = 0.0
    final_equity: float = 0.0
    flags: tuple[str, ...] = ()
    extra: Mapping[str, object] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "totalReturn": self.total_return, "annualReturn": self.annual_return,
            "volatility": self.volatility, "sharpe": self.sharpe, "maxDrawdown": self.max_drawdown,
            "calmar": self.calmar, "turnover": self.turnover, "winRate": self.win_rate,
            "tradesPerDay": self.trades_per_day, "avgHoldingHours": self.avg_holding_hours,
            "medianHoldingHours": self.median_holding_hours, "avgDailyReturn": self.avg_daily_return,
            "nTrades": self.n_trades, "nDays": self.n_days, "sharpeDaily": self.sharpe_daily,
            "dailyWinRate": self.daily_win_rate, "finalEquity": self.final_equity,
            "flags": list(self.flags), **dict(self.extra),
        }

    @classmethod
    def empty(cls, reason: str = "no-test-window") -> "MetricsReport":
        return cls(0.0, 0.0, 0.0, 0.0, 0.0, None, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, flags=(reason,))


def pair_trades(fills: Sequence[Fill], final_prices: Mapping[str, float] | None = None,
                final_ts: int | None = None) -> list[Trade]:
    """First-in-first-out lot matching.

    Costs are spread over lots pro rata by quantity. Lots still open at the
    end are closed at ``final_prices`` (no exit cost) when given.
    """
    lots: dict[str, deque] = {}
    trades: list[Trade] = []
    for f in fills:
        q = lots.setdefault(f.symbol, deque())
        remaining = f.shares
        cost_per_share = f.cost / abs(f.shares) if f.shares else 0.0
        while remaining != 0.0 and q and math.copysign(1, q[0][0]) != math.copysign(1, remaining):
            lot_qty, lot_px, lot_ts, lot_cps = q[0]
            m = min(abs(lot_qty), abs(remaining))
            side = 1 if lot_qty > 0 else -1
            pnl = side * m * (f.price - lot_px) - m * lot_cps - m * cost_per_share
            trades.append(Trade(f.symbol, side, m, lot_ts, f.timestamp, lot_px, f.price, pnl))
            left = abs(lot_qty) - m
            if left <= abs(lot_qty) * 1e-12:
                q.popleft()
            else:
                q[0] = (side * left, lot_px, lot_ts, lot_cps)
            remaining += side * m  # remaining has the opposite sign
            if abs(remaining) <= abs(f.shares) * 1e-12:
                remaining = 0.0
        if remaining != 0.0:
            q.append((remaining, f.price, f.timestamp, cost_per_share))
    if final_prices is not None and final_ts is not None:
        for sym, q in lots.items():
            for lot_qty, lot_px, lot_ts, lot_cps in q:
                side = 1 if lot_qty > 0 else -1
                m = abs(lot_qty)
                px = float(final_prices[sym])
                trades.append(Trade(sym, side, m, lot_ts, int(final_ts), lot_px, px,
                                    side * m * (px - lot_px) - m * lot_cps))
    return trades


def day_keys(timestamps: np.ndarray, tz: str = "UTC") -> np.ndarray:
    idx = pd.to_datetime(np.asarray(timestamps, dtype=np.int64), unit="ms", utc=True)
    if tz != "UTC":
        idx = idx.tz_convert(tz)
    return np.asarray(idx.strftime("%Y-%m-%d"))


def daily_returns(curve: EquityCurve, tz: str = "UTC") -> tuple[np.ndarray, np.ndarray]:
    """End-of-day equity per calendar day and the day-over-day returns (first vs. initial capital)."""
    keys = day_keys(curve.timestamps, tz)
    last = np.r_[keys[1:] != keys[:-1], True]
    eod = curve.equity[last]
    prev = np.r_[curve.initial, eod[:-1]]
    return eod, eod / prev - 1.0


def compute_metrics(curve: EquityCurve, fills: Sequence[Fill], *, market: str = "crypto",
                    final_prices: Mapping[str, float] | None = None,
                    bars_per_day: float | None = None) -> MetricsReport:
    """Every report field from an equity curve and its fills."""
    if len(curve) < 2:
        raise DataError("equity curve needs at least 2 points", module="backtest")
    ppy = PERIODS_PER_YEAR[market]
    flags = []
    eq = np.asarray(curve.equity, dtype=float)
    total = float(eq[-1] / curve.initial - 1.0)
    _, rets = daily_returns(curve, DAY_TZ[market])
    n_days = len(rets)
    annual = float((1.0 + total) ** (ppy / n_days) - 1.0) if total > -1 else -1.0
    sd = float(np.std(rets, ddof=1)) if n_days > 1 else 0.0
    mean = float(np.mean(rets))
    if sd == 0.0 or not math.isfinite(sd):
        sharpe = sharpe_daily = 0.0
        flags.append("degenerate-volatility")
        sd = 0.0
    else:
        sharpe_daily = mean / sd
        sharpe = sharpe_daily * math.sqrt(ppy)
    vol = sd * math.sqrt(ppy)
    path = np.r_[curve.initial, eq]
    mdd = float(np.min(path / np.maximum.accumulate(path)) - 1.0)
    if mdd < 0:
        calmar = annual / abs(mdd)
    else:
        calmar = None
        flags.append("calmar-undefined")
    by_ts: dict[int, float] = {}
    for f in fills:
        by_ts[f.timestamp] = by_ts.get(f.timestamp, 0.0) + abs(f.delta_weight)
    turnover = float(np.mean(list(by_ts.values()))) if by_ts else 0.0
    trades = pair_trades(fills, final_prices, int(curve.timestamps[-1]))
    n_trades = len(trades)
    win = float(sum(t.pnl > 0 for t in trades) / n_trades) if n_trades else 0.0
    hold = np.array([t.holding_hours for t in trades]) if trades else np.zeros(0)
    if bars_per_day is None:
        bars_per_day = DAY_MS / float(np.median(np.diff(curve.timestamps))) if market == "crypto" \
            else len(curve) / n_days
    elapsed_days = len(curve) / bars_per_day
    return MetricsReport(
        total_return=total, annual_return=annual, volatility=vol, sharpe=sharpe, max_drawdown=mdd,
        calmar=calmar, turnover=turnover, win_rate=win,
        trades_per_day=n_trades / elapsed_days,
        avg_holding_hours=float(hold.mean()) if n_trades else 0.0,
        median_holding_hours=float(np.median(hold)) if n_trades else 0.0,
        avg_daily_return=mean, n_trades=n_trades, n_days=n_days, sharpe_daily=sharpe_daily,
        daily_win_rate=float(np.mean(rets > 0)), final_equity=float(eq[-1]), flags=tuple(flags))
