"""Seeded synthetic OHLCV data: geometric random walk with scripted segments."""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .ingest import BarSeries, freq_to_ms, get_calendar, grid_slots, write_csv

DEFAULT_START_MS = 1_753_574_400_000  # 2025-07-27T00:00:00Z


@dataclass(frozen=True)
class Segment:
    """Scripted stretch of bars ``[start, start + length)``.

    ``drift`` is the total deterministic move over the segment as a fraction
    (0.05 = +5%); ``vol_mult`` scales the noise inside it.
    """

    start: int
    length: int
    drift: float = 0.0
    vol_mult: float = 1.0

    @classmethod
    def from_dict(cls, d: dict) -> "Segment":
        return cls(int(d["start"]), int(d["length"]), float(d.get("drift", 0.0)),
                   float(d.get("vol_mult", d.get("volMult", 1.0))))


def _timestamps(n: int, frequency: str, start_ms: int, calendar) -> np.ndarray:
    step = freq_to_ms(frequency)
    cal = get_calendar(calendar)
    if cal.name in ("24x7",):
        return start_ms + step * np.arange(n, dtype=np.int64)
    out = []
    cursor = start_ms
    chunk = max(n * 4, 1024)
    while len(out) < n:
        slots = grid_slots(cursor, cursor + (chunk - 1) * step, step)
        out.extend(slots[cal.in_session(slots, step)].tolist())
        cursor += chunk * step
    return np.asarray(out[:n], dtype=np.int64)


def _draw(seed: int, n: int):
    rng = np.random.default_rng(seed)
    eps = rng.standard_normal(n)
    wick_hi = np.abs(rng.standard_normal(n))
    wick_lo = np.abs(rng.standard_normal(n))
    vol_noise = rng.standard_normal(n)
    return eps, wick_hi, wick_lo, vol_noise


def log_increments(n: int, seed: int, vol: float, segments: Sequence[Segment]):
    """Per-bar log-price increments split into (noise part, drift part)."""
    eps = _draw(seed, n)[0]
    scale = np.full(n, vol)
    drift = np.zeros(n)
    for s in segments:
        end = min(s.start + s.length, n)
        if end <= s.start:
            continue
        scale[s.start:end] *= s.vol_mult
        drift[s.start:end] += math.log1p(s.drift) / s.length
    return scale * eps, drift


def gen_synthetic(seed: int = 7, days: float = 20, segments: Sequence[Segment | dict] = (), *,
                  symbol: str = "BTCUSDT", frequency: str = "1m", vol: float = 0.0008,
                  start_price: float = 60_000.0, base_volume: float = 5.0,
                  start_ms: int = DEFAULT_START_MS, calendar=None,
                  bars_per_day: int | None = None) -> BarSeries:
    """Generate a seed-deterministic bar series.

    The first bar's open equals ``start_price``; each bar opens at the
    previous close. ``vol`` is the per-bar log-return standard deviation.
    """
    segs = [s if isinstance(s, Segment) else Segment.from_dict(s) for s in segments]
    if bars_per_day is None:
        bars_per_day = 86_400_000 // freq_to_ms(frequency)
    n = int(round(days * bars_per_day))
    noise, drift = log_increments(n, seed, vol, segs)
    _, wick_hi, wick_lo, vol_noise = _draw(seed, n)
    close = start_price * np.exp(np.cumsum(noise + drift))
    open_ = np.empty(n)
    open_[0] = start_price
    open_[1:] = close[:-1]
    wick = 0.5 * vol
    high = np.maximum(open_, close) * np.exp(wick * wick_hi)
    low = np.minimum(open_, close) * np.exp(-wick * wick_lo)
    volume = base_volume * np.exp(0.5 * vol_noise)
    ts = _timestamps(n, frequency, start_ms, calendar)
    return BarSeries(symbol, frequency, ts, open_, high, low, close, volume)


def gen_universe(symbols: Sequence[str], seed: int = 7, days: float = 120, *, frequency: str = "1h",
                 calendar="us-equity", vol: float = 0.006, **kw) -> dict[str, BarSeries]:
    """Independent walks per symbol (per-symbol seed derived from ``seed``)."""
    bpd = 7 if calendar == "us-equity" and frequency == "1h" else None
    out = {}
    for i, sym in enumerate(symbols):
        sub_seed = int(np.random.SeedSequence([seed, i]).generate_state(1)[0])
        out[sym] = gen_synthetic(sub_seed, days, symbol=sym, frequency=frequency, vol=vol,
                                 start_price=100.0 + 20 * i, calendar=calendar,
                                 bars_per_day=bpd, **kw)
    return out


def write_dataset(series: dict[str, BarSeries] | BarSeries, out_dir: str | Path) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if isinstance(series, BarSeries):
        series = {series.symbol: series}
    paths = []
    for sym, s in series.items():
        p = out_dir / f"{sym}.csv"
        write_csv(s, p)
        paths.append(p)
    return paths


def gen_from_spec(spec: dict) -> dict[str, BarSeries]:
    """Generate a dataset from a JSON-style spec (seed, days, symbols, frequency, calendar, segments)."""
    symbols = list(spec.get("symbols", ["BTCUSDT"]))
    seed = int(spec.get("seed", 7))
    days = float(spec.get("days", 20))
    frequency = spec.get("frequency", "1m")
    calendar = spec.get("calendar", "24x7")
    segments = [Segment.from_dict(s) for s in spec.get("segments", [])]
    kw = {"vol": float(spec["vol"])} if "vol" in spec else {}
    if len(symbols) == 1 and calendar in ("24x7", "crypto"):
        s = gen_synthetic(seed, days, segments, symbol=symbols[0], frequency=frequency,
                          start_price=float(spec.get("startPrice", 60_000.0)), calendar=calendar, **kw)
        return {s.symbol: s}
    return gen_universe(symbols, seed, days, frequency=frequency, calendar=calendar, segments=segments, **kw)
