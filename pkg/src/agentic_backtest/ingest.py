"""OHLCV ingestion: parse, deduplicate, calendar-align and anomaly-correct bars."""
from __future__ import annotations

import csv
import logging
import math
import statistics
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Protocol, Sequence
from zoneinfo import ZoneInfo

import numpy as np
import pandas as pd

from .errors import AmbiguityError, EmptyInputError, ParameterError, ParseError, TransportError

logger = logging.getLogger(__name__)

HEADER = ("timestamp", "open", "high", "low", "close", "volume")
FREQ_MS = {"1m": 60_000, "1h": 3_600_000, "1d": 86_400_000}
MAD_CONSISTENCY = 1.4826


def freq_to_ms(frequency: str) -> int:
    try:
        return FREQ_MS[frequency]
    except KeyError:
        raise ParameterError(f"unknown frequency {frequency!r}; expected one of {sorted(FREQ_MS)}",
                             module="ingest") from None


@dataclass(frozen=True)
class Bar:
    timestamp: int
    open: float
    high: float
    low: float
    close: float
    volume: float

    def validate(self) -> None:
        if not (self.open > 0 and self.high > 0 and self.low > 0 and self.close > 0):
            raise ValueError("prices must be > 0")
        if self.volume < 0:
            raise ValueError("volume must be >= 0")
        if self.low > min(self.open, self.close) or self.high < max(self.open, self.close):
            raise ValueError("bar violates low <= min(open, close) <= max(open, close) <= high")


@dataclass(frozen=True, eq=False)
class BarSeries:
    """Immutable, strictly time-ordered bars for one symbol on one grid.

    Columns are stored as read-only numpy arrays. ``gaps`` lists grid slots
    with no bar (gaps are recorded, never filled).
    """

    symbol: str
    frequency: str
    timestamps: np.ndarray
    open: np.ndarray
    high: np.ndarray
    low: np.ndarray
    close: np.ndarray
    volume: np.ndarray
    gaps: tuple[int, ...] = field(default=())

    def __post_init__(self):
        for name in ("timestamps", "open", "high", "low", "close", "volume"):
            dtype = np.int64 if name == "timestamps" else np.float64
            arr = np.array(getattr(self, name), dtype=dtype)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        n = len(self.timestamps)
        if any(len(getattr(self, c)) != n for c in HEADER[1:]):
            raise ValueError("column length mismatch")
        if n > 1 and np.any(np.diff(self.timestamps) <= 0):
            raise ValueError("timestamps must be strictly increasing")

    def __len__(self) -> int:
        return len(self.timestamps)

    def __eq__(self, other) -> bool:
        if not isinstance(other, BarSeries):
            return NotImplemented
        return (self.symbol == other.symbol and self.frequency == other.frequency
                and all(np.array_equal(getattr(self, c), getattr(other, c))
                        for c in ("timestamps",) + HEADER[1:]))

    @classmethod
    def empty(cls, symbol: str, frequency: str) -> "BarSeries":
        z = np.empty(0)
        return cls(symbol, frequency, np.empty(0, dtype=np.int64), z, z, z, z, z)

    @classmethod
    def from_bars(cls, symbol: str, frequency: str, bars: Sequence[Bar]) -> "BarSeries":
        if not bars:
            return cls.empty(symbol, frequency)
        cols = list(zip(*[(b.timestamp, b.open, b.high, b.low, b.close, b.volume) for b in bars]))
        return cls(symbol, frequency, *cols)

    @classmethod
    def from_frame(cls, df: pd.DataFrame, symbol: str, frequency: str) -> "BarSeries":
        return cls(symbol, frequency, *(df[c].to_numpy() for c in HEADER))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({c: (self.timestamps if c == "timestamp" else getattr(self, c)) for c in HEADER})

    def bars(self) -> list[Bar]:
        return [Bar(int(t), float(o), float(h), float(l), float(c), float(v))
                for t, o, h, l, c, v in zip(self.timestamps, self.open, self.high,
                                            self.low, self.close, self.volume)]

    def take(self, idx) -> "BarSeries":
        return BarSeries(self.symbol, self.frequency,
                         *(getattr(self, c)[idx] for c in ("timestamps",) + HEADER[1:]))

    def window(self, start: int, end: int) -> "BarSeries":
        """Bars with ``start <= timestamp < end`` (epoch ms)."""
        mask = (self.timestamps >= start) & (self.timestamps < end)
        return self.take(mask)

    def head(self, n: int) -> "BarSeries":
        return self.take(slice(0, n))


@dataclass
class QualityReport:
    missing_pct: float = 0.0
    dup_ticks_removed: int = 0
    outlier_events: int = 0
    aligned_calendars: bool = False
    input_rows: int = 0
    unparseable_rows: int = 0
    gaps: list[int] = field(default_factory=list)

    def merge(self, other: "QualityReport") -> "QualityReport":
        return QualityReport(
            missing_pct=other.missing_pct,
            dup_ticks_removed=self.dup_ticks_removed + other.dup_ticks_removed,
            outlier_events=self.outlier_events + other.outlier_events,
            aligned_calendars=self.aligned_calendars or other.aligned_calendars,
            input_rows=self.input_rows or other.input_rows,
            unparseable_rows=self.unparseable_rows + other.unparseable_rows,
            gaps=list(other.gaps or self.gaps),
        )

    def to_dict(self) -> dict:
        return {
            "missingPct": self.missing_pct,
            "dupTicksRemoved": self.dup_ticks_removed,
            "outlierEvents": self.outlier_events,
            "alignedCalendars": self.aligned_calendars,
            "inputRows": self.input_rows,
            "unparseableRows": self.unparseable_rows,
            "gapCount": len(self.gaps),
        }


# --------------------------------------------------------------------------
# calendars

class Calendar:
    """Which grid slots are expected to carry a bar. Default: every slot (24/7)."""

    name = "24x7"

    def in_session(self, slots: np.ndarray, step_ms: int) -> np.ndarray:
        return np.ones(len(slots), dtype=bool)


class USEquityCalendar(Calendar):
    """Weekday slots overlapping the 09:30-16:00 America/New_York session.

    Exchange holidays are not modelled.
    """

    name = "us-equity"
    _tz = ZoneInfo("America/New_York")

    def in_session(self, slots, step_ms):
        out = np.zeros(len(slots), dtype=bool)
        for i, s in enumerate(slots):
            start = datetime.fromtimestamp(s / 1000, tz=timezone.utc).astimezone(self._tz)
            end = datetime.fromtimestamp((s + step_ms) / 1000, tz=timezone.utc).astimezone(self._tz)
            if start.weekday() >= 5:
                continue
            open_ = start.replace(hour=9, minute=30, second=0, microsecond=0)
            close = start.replace(hour=16, minute=0, second=0, microsecond=0)
            out[i] = start < close and end > open_
        return out


CALENDARS = {"24x7": Calendar(), "crypto": Calendar(), "us-equity": USEquityCalendar()}


def get_calendar(name: str | Calendar | None) -> Calendar:
    if name is None:
        return CALENDARS["24x7"]
    if isinstance(name, Calendar):
        return name
    try:
        return CALENDARS[name]
    except KeyError:
        raise ParameterError(f"unknown calendar {name!r}", module="ingest") from None


# --------------------------------------------------------------------------
# parsing

def _parse_timestamp(text: str, mode: str) -> int:
    if mode == "epoch":
        if not text.lstrip("-").isdigit():
            raise ValueError(f"expected epoch-ms timestamp, got {text!r}")
        return int(text)
    if text.lstrip("-").isdigit():
        raise ValueError(f"expected RFC3339 timestamp, got {text!r} (mixed formats)")
    s = text.strip()
    if s.endswith(("Z", "z")):
        s = s[:-1] + "+00:00"
    dt = datetime.fromisoformat(s)
    if dt.tzinfo is None:
        raise ValueError(f"RFC3339 timestamp without offset: {text!r}")
    # timedelta arithmetic keeps millisecond precision exact
    delta = dt - datetime(1970, 1, 1, tzinfo=timezone.utc)
    return (delta.days * 86_400 + delta.seconds) * 1000 + delta.microseconds // 1000


def parse_csv(path: str | Path, *, strict: bool = True) -> tuple[list[Bar], int, int]:
    """Parse an OHLCV file. Returns (bars in file order, input rows, skipped rows)."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyInputError(f"{path}: empty file", hint="provide a CSV with a header row") from None
        header = [h.strip() for h in header]
        if tuple(header[:6]) != HEADER:
            raise ParseError(f"header must start with {','.join(HEADER)}, got {','.join(header)}",
                             line=1, module="ingest")
        bars: list[Bar] = []
        mode = None
        rows = skipped = 0
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            rows += 1
            try:
                if len(row) < 6:
                    raise ValueError(f"expected at least 6 fields, got {len(row)}")
                ts_text = row[0].strip()
                if mode is None:
                    mode = "epoch" if ts_text.lstrip("-").isdigit() else "rfc3339"
                o, h, l, c, v = (float(x) for x in row[1:6])
                if not all(math.isfinite(x) for x in (o, h, l, c, v)):
                    raise ValueError("non-finite value")
                bar = Bar(_parse_timestamp(ts_text, mode), o, h, l, c, v)
                bar.validate()
            except ValueError as exc:
                if strict:
                    raise ParseError(str(exc), line=lineno, module="ingest",
                                     hint="fix or remove the row, or load with strict=False") from None
                logger.warning("%s line %d skipped: %s", path, lineno, exc)
                skipped += 1
                continue
            bars.append(bar)
    if rows == 0:
        raise EmptyInputError(f"{path}: no data rows", hint="file has a header but no bars")
    return bars, rows, skipped


def _dedupe_keep_last(bars: list[Bar]) -> tuple[list[Bar], int]:
    latest: dict[int, Bar] = {}
    for b in bars:
        latest[b.timestamp] = b
    out = [latest[t] for t in sorted(latest)]
    return out, len(bars) - len(out)


def grid_slots(first: int, last: int, step_ms: int) -> np.ndarray:
    return np.arange(first, last + 1, step_ms, dtype=np.int64)


def snap(ts: np.ndarray, step_ms: int) -> np.ndarray:
    """Round to the nearest grid slot (ties go down)."""
    ts = np.asarray(ts, dtype=np.int64)
    base = (ts // step_ms) * step_ms
    rem = ts - base
    return np.where(rem * 2 > step_ms, base + step_ms, base)


def align_calendar(series: BarSeries, grid: str | None = None,
                   calendar: str | Calendar | None = None) -> BarSeries:
    """Snap every bar to the frequency grid and record missing session slots."""
    grid = grid or series.frequency
    step = freq_to_ms(grid)
    if len(series) == 0:
        return replace(series, frequency=grid, gaps=())
    if np.any(np.diff(series.timestamps) <= 0):
        raise ParameterError("series must be ordered before alignment", module="ingest")
    snapped = snap(series.timestamps, step)
    collide = np.nonzero(np.diff(snapped) == 0)[0]
    if len(collide):
        i = int(collide[0])
        raise AmbiguityError(
            f"bars at {int(series.timestamps[i])} and {int(series.timestamps[i + 1])} both snap to "
            f"slot {int(snapped[i])}",
            hint="deduplicate or resample before aligning")
    slots = grid_slots(int(snapped[0]), int(snapped[-1]), step)
    expected = slots[get_calendar(calendar).in_session(slots, step)]
    gaps = np.setdiff1d(expected, snapped, assume_unique=True)
    return BarSeries(series.symbol, grid, snapped, series.open, series.high, series.low,
                     series.close, series.volume, gaps=tuple(int(g) for g in gaps))


def missing_fraction(series: BarSeries, calendar: str | Calendar | None = None) -> float:
    if len(series) == 0:
        return 0.0
    step = freq_to_ms(series.frequency)
    slots = grid_slots(int(series.timestamps[0]), int(series.timestamps[-1]), step)
    expected = int(get_calendar(calendar).in_session(slots, step).sum())
    if expected == 0:
        return 0.0
    return len(series.gaps) / expected


def load_csv(path: str | Path, symbol: str, frequency: str = "1m", *,
             calendar: str | Calendar | None = None,
             strict: bool = True) -> tuple[BarSeries, QualityReport]:
    """Load, deduplicate (keep last) and grid-align an OHLCV CSV file."""
    freq_to_ms(frequency)
    bars, rows, skipped = parse_csv(path, strict=strict)
    bars, dups = _dedupe_keep_last(bars)
    series = align_calendar(BarSeries.from_bars(symbol, frequency, bars), frequency, calendar)
    report = QualityReport(
        missing_pct=missing_fraction(series, calendar),
        dup_ticks_removed=dups,
        aligned_calendars=True,
        input_rows=rows,
        unparseable_rows=skipped,
        gaps=list(series.gaps),
    )
    return series, report


def correct_anomalies(series: BarSeries, zmax: float = 8.0, window: int = 1440, *,
                      min_periods: int = 20, max_run: int = 5,
                      calendar: str | Calendar | None = None) -> tuple[BarSeries, QualityReport]:
    """Drop bars whose one-step log return is more than ``zmax`` robust deviations out.

    The robust deviation is 1.4826 * MAD of the trailing ``window`` accepted
    returns. A bar's return is measured against the last *kept* close so a
    one-bar spike is flagged once, not twice. After ``max_run`` consecutive
    flags the next bar is accepted as a level shift and the window restarts.
    Flagged bars are dropped, never interpolated.
    """
    n = len(series)
    if n == 0:
        return series, QualityReport(aligned_calendars=True)
    keep = np.ones(n, dtype=bool)
    hist: list[float] = []
    last_close = series.close[0]
    run = 0
    closes = series.close
    for i in range(1, n):
        r = math.log(closes[i] / last_close)
        flagged = False
        if len(hist) >= min_periods:
            w = np.asarray(hist[-window:])
            med = float(np.median(w))
            mad = float(np.median(np.abs(w - med)))
            scale = MAD_CONSISTENCY * mad
            dev = abs(r - med)
            flagged = dev > zmax * scale if scale > 0 else dev > 0
        if flagged and run < max_run:
            keep[i] = False
            run += 1
            continue
        if flagged:
            logger.info("%s: accepting level shift at %d", series.symbol, int(series.timestamps[i]))
            hist = []
        else:
            hist.append(r)
        run = 0
        last_close = closes[i]
    # dropped bars become gaps on the grid
    dropped = set(int(t) for t in series.timestamps[~keep])
    out = replace(series.take(keep), gaps=tuple(sorted(set(series.gaps) | dropped)))
    report = QualityReport(
        missing_pct=missing_fraction(out, calendar),
        outlier_events=int((~keep).sum()),
        aligned_calendars=True,
        gaps=list(out.gaps),
    )
    return out, report


def robust_zscores_reference(closes: Sequence[float], window: int = 1440,
                             min_periods: int = 20) -> list[float]:
    """Robust z-score of each sequential return against the trailing window (no dropping).

    Used to diagnose a series; ``correct_anomalies`` additionally re-bases on kept bars.
    """
    z = [0.0]
    rets: list[float] = []
    for i in range(1, len(closes)):
        r = math.log(closes[i] / closes[i - 1])
        if len(rets) >= min_periods:
            w = rets[-window:]
            med = statistics.median(w)
            mad = statistics.median(abs(x - med) for x in w)
            z.append((r - med) / (MAD_CONSISTENCY * mad) if mad > 0 else (0.0 if r == med else math.inf))
        else:
            z.append(0.0)
        rets.append(r)
    return z


def ingest_file(path, symbol, frequency="1m", *, zmax=8.0, window=1440, calendar=None,
                strict=True) -> tuple[BarSeries, QualityReport]:
    """Full ingest pipeline: load, dedupe, align, correct anomalies."""
    series, rep = load_csv(path, symbol, frequency, calendar=calendar, strict=strict)
    series, rep2 = correct_anomalies(series, zmax, window, calendar=calendar)
    return series, rep.merge(rep2)


def write_csv(series: BarSeries, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEADER)
        for t, o, h, l, c, v in zip(series.timestamps, series.open, series.high,
                                    series.low, series.close, series.volume):
            w.writerow([int(t), repr(float(o)), repr(float(h)), repr(float(l)),
                        repr(float(c)), repr(float(v))])


# --------------------------------------------------------------------------
# remote fetchers

class Fetcher(Protocol):
    def fetch(self, symbol: str, start: int, end: int) -> BarSeries: ...


class FileFetcher:
    """Stub fetcher reading ``<root>/<symbol>.csv``; stands in for a market-data API."""

    def __init__(self, root: str | Path, frequency: str = "1m", calendar=None):
        self.root = Path(root)
        self.frequency = frequency
        self.calendar = calendar

    def fetch(self, symbol: str, start: int, end: int) -> BarSeries:
        path = self.root / f"{symbol}.csv"
        if not path.exists():
            raise ConnectionError(f"no data for {symbol} at {self.root}")
        series, _ = load_csv(path, symbol, self.frequency, calendar=self.calendar)
        return series.window(start, end)


def fetch_remote(fetcher: Fetcher, symbol: str, window: tuple[int, int], *,
                 retries: int = 2) -> BarSeries:
    """Fetch bars in ``[start, end)`` with a bounded retry on transport failures."""
    start, end = window
    if end <= start:
        return BarSeries.empty(symbol, getattr(fetcher, "frequency", "1m"))
    attempt = 0
    while True:
        try:
            return fetcher.fetch(symbol, start, end)
        except (ConnectionError, TimeoutError, OSError) as exc:
            if attempt >= retries:
                raise TransportError(f"fetch {symbol} failed: {exc}", retries=attempt) from exc
            attempt += 1
            logger.warning("fetch %s failed (%s); retry %d/%d", symbol, exc, attempt, retries)
