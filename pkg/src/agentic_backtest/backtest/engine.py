"""Bar-by-bar execution simulator with latency, fees and slippage."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from ..errors import DataError, ParameterError
from ..ingest import BarSeries
from ..portfolio import TargetPortfolio

log = logging.getLogger(__name__)

INITIAL_CAPITAL = 100_000.0


@dataclass(frozen=True)
class ExecutionConfig:
    """``latency`` is extra bars on top of the one-bar decision-to-fill delay."""

    fee_rate: float = 0.0005
    slippage: float = 0.0002
    latency: int = 0

    def __post_init__(self):
        if self.fee_rate < 0 or self.slippage < 0 or self.latency < 0:
            raise ParameterError("execution settings must be >= 0", module="backtest")

    @property
    def cost_rate(self) -> float:
        return self.fee_rate + self.slippage

    @classmethod
    def for_market(cls, market: str, **overrides) -> "ExecutionConfig":
        base = {"crypto": dict(fee_rate=0.0005, slippage=0.0002),
                "stock": dict(fee_rate=0.0001, slippage=0.0001)}
        if market not in base:
            raise ParameterError(f"unknown market {market!r}", module="backtest")
        return cls(**{**base[market], **overrides})

    def to_dict(self) -> dict:
        return {"feeRate": self.fee_rate, "slippage": self.slippage, "latency": self.latency}


@dataclass(frozen=True)
class Fill:
    timestamp: int
    symbol: str
    delta_weight: float
    price: float
    cost: float
    shares: float
    notional: float
    decision_ts: int


@dataclass
class EquityCurve:
    timestamps: np.ndarray
    equity: np.ndarray
    initial: float = INITIAL_CAPITAL

    def __len__(self) -> int:
        return len(self.timestamps)

    def to_csv(self, path: str | Path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["timestamp", "equity"])
            for t, e in zip(self.timestamps, self.equity):
                w.writerow([int(t), repr(float(e))])
        return path


@dataclass
class SimResult:
    curve: EquityCurve
    fills: list[Fill]
    events: list[dict] = field(default_factory=list)
    gross_pnl: float = 0.0
    total_cost: float = 0.0
    bankrupt: bool = False
    final_shares: dict[str, float] = field(default_factory=dict)
    final_prices: dict[str, float] = field(default_factory=dict)


def write_fills(fills: Sequence[Fill], path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp", "symbol", "delta_weight", "price", "cost", "shares", "notional",
                    "decision_ts"])
        for f in fills:
            w.writerow([f.timestamp, f.symbol, repr(f.delta_weight), repr(f.price), repr(f.cost),
                        repr(f.shares), repr(f.notional), f.decision_ts])
    return path


@dataclass
class MarketView:
    """What a strategy sees at decision time: data up to and including bar ``t``."""

    t: int
    timestamp: int
    equity: float
    weights: dict[str, float]
    closes: dict[str, float]


Strategy = Callable[[MarketView], "TargetPortfolio | None"]


def _align(series: Mapping[str, BarSeries] | BarSeries) -> tuple[list[str], np.ndarray, dict, dict]:
    if isinstance(series, BarSeries):
        series = {series.symbol: series}
    if not series:
        raise DataError("no series to simulate", module="backtest")
    syms = sorted(series)
    ts = series[syms[0]].timestamps
    for s in syms[1:]:
        ts = np.intersect1d(ts, series[s].timestamps)
    opens, closes = {}, {}
    for s in syms:
        idx = np.searchsorted(series[s].timestamps, ts)
        opens[s] = np.asarray(series[s].open, dtype=float)[idx]
        closes[s] = np.asarray(series[s].close, dtype=float)[idx]
    return syms, np.asarray(ts, dtype=np.int64), opens, closes


def simulate(series: Mapping[str, BarSeries] | BarSeries, strategy: Strategy,
             exec_cfg: ExecutionConfig | None = None, capital: float = INITIAL_CAPITAL, *,
             start: int = 0, stop: int | None = None) -> SimResult:
    """Run ``strategy`` over bars ``[start, stop)`` of the timestamp-aligned series.

    A target returned at bar ``t`` fills at the open of bar ``t + 1 + latency``
    as ``weight * equity`` of notional per symbol. ``None`` means no order.
    Orders whose fill bar lies past ``stop`` expire unfilled. Equity is marked
    at every close; equity at or below zero halts the run.
    """
    cfg = exec_cfg or ExecutionConfig()
    if capital <= 0:
        raise ParameterError("capital must be positive", module="backtest")
    syms, ts, opens, closes = _align(series)
    stop = len(ts) if stop is None else min(stop, len(ts))
    if not (0 <= start <= stop):
        raise ParameterError("bad simulation range", module="backtest")
    cash = float(capital)
    shares = {s: 0.0 for s in syms}
    pending: dict[int, tuple[int, TargetPortfolio]] = {}
    fills: list[Fill] = []
    events: list[dict] = []
    eq_ts, eq = [], []
    gross_pnl = 0.0
    total_cost = 0.0
    prev_close = {s: math.nan for s in syms}
    bankrupt = False
    for t in range(start, stop):
        o = {s: opens[s][t] for s in syms}
        c = {s: closes[s][t] for s in syms}
        for s in syms:
            if shares[s] != 0.0:
                gross_pnl += shares[s] * (o[s] - prev_close[s])
        order = pending.pop(t, None)
        if order is not None:
            dts, target = order
            e_open = cash + sum(shares[s] * o[s] for s in syms)
            for s in syms:
                if s not in target.weights:
                    continue
                cur = shares[s] * o[s]
                delta = target.weight(s) * e_open - cur
                if delta == 0.0:
                    continue
                cost = abs(delta) * cfg.cost_rate
                dq = delta / o[s]
                shares[s] += dq
                cash -= delta + cost
                total_cost += cost
                fills.append(Fill(int(ts[t]), s, delta / e_open, float(o[s]), cost, dq, delta, dts))
        for s in syms:
            if shares[s] != 0.0:
                gross_pnl += shares[s] * (c[s] - o[s])
            prev_close[s] = c[s]
        equity = cash + sum(shares[s] * c[s] for s in syms)
        eq_ts.append(int(ts[t]))
        eq.append(equity)
        if equity <= 0:
            bankrupt = True
            events.append({"event": "bankruptcy", "ts": int(ts[t]), "equity": equity})
            log.warning("bankruptcy at %d; halting", ts[t])
            break
        view = MarketView(t, int(ts[t]), equity,
                          {s: shares[s] * c[s] / equity for s in syms}, c)
        target = strategy(view)
        if target is not None:
            fill_bar = t + 1 + cfg.latency
            if fill_bar >= stop:
                events.append({"event": "order-expired", "ts": int(ts[t]), "fillBar": fill_bar})
            else:
                pending[fill_bar] = (int(ts[t]), target)
    last = {s: float(prev_close[s]) for s in syms}
    return SimResult(EquityCurve(np.asarray(eq_ts, dtype=np.int64), np.asarray(eq, dtype=float), capital),
                     fills, events, gross_pnl, total_cost, bankrupt, dict(shares), last)


def schedule_strategy(schedule: Sequence[tuple[int, TargetPortfolio]]) -> Strategy:
    """Strategy emitting precomputed targets at given bar indices."""
    by_bar = {i: p for i, p in schedule}
    return lambda view: by_bar.get(view.t)
