"""Raw feature set over one bar series (105 columns).

All columns are causal: the value at bar ``t`` uses bars ``<= t`` only. Each
column is NaN before its declared lookback and finite from it onwards.
"""
from __future__ import annotations

import numpy as np

from ..errors import InsufficientHistoryError
from ..ingest import BarSeries
from . import _kernels as K
from .frame import FeatureFrame, FeatureSpec

HORIZONS = (1, 3, 5, 10, 15, 30, 60, 240)
RV_WINDOWS = (5, 15, 30, 60, 240)
MIN_HISTORY = 240
VWAP_WINDOW = 60
SHORT_VOL = 15
LONG_VOL = 240
GARCH_ALPHA = 0.06


def _safe_div(num, den, fill):
    out = np.full_like(num, fill, dtype=float)
    np.divide(num, den, out=out, where=den != 0)
    out[np.isnan(num) | np.isnan(den)] = np.nan
    return out


def _sign(x):
    return np.sign(x)


def _lag(x, k):
    out = np.full_like(x, np.nan, dtype=float)
    if k < len(x):
        out[k:] = x[: len(x) - k]
    return out


def _logret(close, k):
    return np.log(close / _lag(close, k))


class _Builder:
    def __init__(self, n):
        self.n = n
        self.cols: dict[str, np.ndarray] = {}
        self.specs: list[FeatureSpec] = []

    def add(self, name, family, lookback, values, *, definition="standard", description=""):
        v = np.array(values, dtype=float)
        v[: min(lookback, self.n)] = np.nan
        self.cols[name] = v
        self.specs.append(FeatureSpec(name, family, lookback, definition, description))


def feature_specs() -> tuple[FeatureSpec, ...]:
    """Specs of every column without computing values."""
    ts = np.arange(MIN_HISTORY + 2, dtype=np.int64) * 60_000
    c = 100.0 * np.exp(np.cumsum(np.full(len(ts), 1e-4)))
    s = BarSeries("_", "1m", ts, c, c * 1.001, c * 0.999, c, np.ones(len(ts)))
    return compute_raw_features(s).specs


def compute_raw_features(series: BarSeries) -> FeatureFrame:
    """Compute every raw feature column for ``series`` (needs >= 240 bars)."""
    with np.errstate(divide="ignore", invalid="ignore"):
        return _compute(series)


def _compute(series: BarSeries) -> FeatureFrame:
    n = len(series)
    if n < MIN_HISTORY:
        raise InsufficientHistoryError(
            f"{series.symbol}: {n} bars < required {MIN_HISTORY}",
            hint="extend the data window; the longest feature needs 240 bars")
    o = np.asarray(series.open, dtype=float)
    h = np.asarray(series.high, dtype=float)
    l = np.asarray(series.low, dtype=float)
    c = np.asarray(series.close, dtype=float)
    v = np.asarray(series.volume, dtype=float)
    r1 = _logret(c, 1)
    r1z = np.nan_to_num(r1)  # only for kernels whose windows start at index >= 1
    b = _Builder(n)

    # price
    b.add("ret_5", "price", 5, _logret(c, 5), description="5-bar log return (smoothed downstream)")
    for w in RV_WINDOWS:
        b.add(f"rv_{w}", "price" if w == 15 else "volatility", w,
              np.sqrt(K.rolling_sum(r1z * r1z, w)), description=f"sqrt of summed squared returns, {w} bars")
    alpha60 = 2.0 / 61.0
    sq = r1 * r1
    b.add("ewm_vol_60", "price", 60, np.sqrt(K.ewm(sq, alpha60)),
          description="sqrt EWM(span 60) of squared returns")
    tp = (h + l + c) / 3.0
    sv = K.rolling_sum(v, VWAP_WINDOW)
    vwap = _safe_div(K.rolling_sum(tp * v, VWAP_WINDOW), sv, np.nan)
    vwap = np.where(sv == 0, K.rolling_mean(tp, VWAP_WINDOW), vwap)
    b.add("mid_vwap_gap", "price", VWAP_WINDOW - 1, ((h + l) / 2.0) / vwap - 1.0,
          description="mid price over rolling 60-bar VWAP minus 1")

    # indicators
    for p in (14, 30):
        b.add(f"rsi_{p}", "indicator", p, K.wilder_rsi(c, p), description=f"Wilder RSI({p})")
    ema12 = K.ewm(c, 2.0 / 13.0)
    ema26 = K.ewm(c, 2.0 / 27.0)
    macd = ema12 - ema26
    sig = K.ewm(macd, 2.0 / 10.0)
    b.add("macd_line", "indicator", 26, macd / c, description="(EMA12-EMA26)/close")
    b.add("macd_signal", "indicator", 34, sig / c, description="EMA9 of MACD line / close")
    b.add("macd_hist", "indicator", 34, (macd - sig) / c, description="MACD histogram / close")
    m20 = K.rolling_mean(c, 20)
    s20 = K.rolling_std(c, 20)
    upper, lower = m20 + 2 * s20, m20 - 2 * s20
    b.add("bb_pos", "indicator", 19, _safe_div(c - lower, upper - lower, 0.5),
          description="position inside 20-bar 2-sigma band (0.5 when band is flat)")
    b.add("bb_width", "indicator", 19, (upper - lower) / m20)
    b.add("bb_overbought", "indicator", 19, (c > upper).astype(float))
    b.add("bb_oversold", "indicator", 19, (c < lower).astype(float))

    # momentum family
    mom = {}
    for k in HORIZONS:
        mk = _logret(c, k)
        mom[k] = mk
        b.add(f"mom_{k}", "momentum", k, mk)
        b.add(f"strength_{k}", "momentum", k, np.abs(mk) / np.sqrt(k), definition="artifact-chosen",
              description="|log return| / sqrt(horizon)")
        pos, neg = K.rolling_sign_count(r1z, k)
        b.add(f"consistency_{k}", "momentum", k, np.maximum(pos, neg) / k, definition="artifact-chosen",
              description="fraction of same-sign one-bar returns in the horizon")
        hi = _lag(K.rolling_max(h, k), 1)
        lo = _lag(K.rolling_min(l, k), 1)
        b.add(f"breakout_{k}", "momentum", k, np.where(c > hi, 1.0, np.where(c < lo, -1.0, 0.0)),
              description="+1 above prior high, -1 below prior low")
        b.add(f"accel_{k}", "momentum", k + 1, mk - _lag(mk, 1), description="one-step change of momentum")
        b.add(f"persistence_{k}", "momentum", k + 1, K.rolling_persistence(r1, k),
              definition="artifact-chosen", description="fraction of steps repeating the previous sign")
        if k > 1:
            sd = K.rolling_std(r1z, k)
            b.add(f"quality_{k}", "momentum", k, _safe_div(mk, sd * np.sqrt(k), 0.0),
                  definition="artifact-chosen", description="momentum / (return std * sqrt(horizon))")
            b.add(f"mom_align_{k}", "momentum", k, _sign(mk) * _sign(mom[1]), definition="artifact-chosen",
                  description="sign agreement with the one-bar return")
    stack = np.vstack([mom[k] for k in HORIZONS])
    trend_signed = stack.mean(axis=0)
    npos = (stack > 0).sum(axis=0)
    nneg = (stack < 0).sum(axis=0)
    lb = max(HORIZONS)
    b.add("trend_signed", "momentum", lb, trend_signed, definition="artifact-chosen",
          description="mean log return across horizons")
    b.add("trend_strength", "momentum", lb, np.abs(trend_signed), definition="artifact-chosen",
          description="|mean log return across horizons|")
    b.add("trend_alignment", "momentum", lb, np.maximum(npos, nneg) / len(HORIZONS),
          definition="artifact-chosen", description="fraction of horizons sharing the majority sign")

    # volatility
    garch = K.ewm(sq, GARCH_ALPHA)
    b.add("r1_sq", "volatility", 1, sq)
    b.add("garch_var", "volatility", 30, garch, description="EWM(0.06) of squared returns")
    b.add("garch_shock", "volatility", 30, _safe_div(sq, garch, 0.0), description="squared return / garch_var")
    b.add("vol_cluster", "volatility", 2, np.abs(r1) * np.abs(_lag(r1, 1)))
    vs = K.rolling_std(r1z, SHORT_VOL)
    vl = K.rolling_std(r1z, LONG_VOL)
    ratio = _safe_div(vs, vl, 1.0)
    b.add("vol_short", "volatility", SHORT_VOL, vs, description="std of one-bar returns, 15 bars")
    b.add("vol_long", "volatility", LONG_VOL, vl, description="std of one-bar returns, 240 bars")
    b.add("vol_ratio", "volatility", LONG_VOL, ratio)
    b.add("vol_regime", "volatility", LONG_VOL,
          np.where(ratio < 0.8, 0.0, np.where(ratio <= 1.2, 1.0, np.where(ratio <= 1.5, 2.0, 3.0))),
          definition="artifact-chosen", description="vol_ratio bucket: <0.8, <=1.2, <=1.5, >1.5")
    rng = (h - l) / c
    b.add("bar_range", "volatility", 1, rng)
    b.add("range_expansion", "volatility", 20, _safe_div(rng, _lag(K.rolling_mean(rng, 20), 1), 1.0),
          description="bar range over mean of previous 20 ranges")

    # structure
    b.add("dist_resistance_20", "structure", 19, K.rolling_max(h, 20) / c - 1.0)
    b.add("dist_support_20", "structure", 19, c / K.rolling_min(l, 20) - 1.0)
    hi20 = _lag(K.rolling_max(h, 20), 1)
    lo20 = _lag(K.rolling_min(l, 20), 1)
    b.add("breakout_20", "structure", 20, np.where(c > hi20, 1.0, np.where(c < lo20, -1.0, 0.0)),
          description="+1 close above prior 20-bar high, -1 below prior 20-bar low")

    # mean reversion
    for w in (20, 60):
        b.add(f"z_{w}", "meanrev", w - 1, _safe_div(c - K.rolling_mean(c, w), K.rolling_std(c, w), 0.0))

    # volume
    lv = np.log1p(v)
    b.add("log_volume", "volume", 1, lv)
    mv20 = K.rolling_mean(v, 20)
    b.add("volume_ratio_20", "volume", 19, _safe_div(v, mv20, 1.0))
    for w in (20, 60):
        b.add(f"volume_z_{w}", "volume", w - 1, _safe_div(v - K.rolling_mean(v, w), K.rolling_std(v, w), 0.0))
    signed = np.sign(c - o) * v
    for w in (5, 15):
        b.add(f"signed_volume_{w}", "volume", w - 1,
              _safe_div(K.rolling_sum(signed, w), K.rolling_sum(v, w), 0.0), definition="artifact-chosen",
              description="bar-direction signed volume share (order-flow stand-in)")
    b.add("pv_corr_20", "volume", 20, K.rolling_corr(r1z, lv, 20),
          description="correlation of one-bar returns and log volume, 20 bars")
    vtrend = np.log((K.rolling_sum(v, 10) + 1.0) / (_lag(K.rolling_sum(v, 10), 10) + 1.0))
    ps = _sign(_logret(c, 20))
    b.add("pv_divergence_20", "volume", 20, np.where(ps != _sign(vtrend), ps, 0.0),
          definition="artifact-chosen", description="price direction when volume trend disagrees, else 0")

    names = tuple(b.cols)
    values = np.column_stack([b.cols[k] for k in names])
    valid_from = {s.name: s.lookback for s in b.specs}
    return FeatureFrame(series.timestamps, names, values, valid_from, tuple(b.specs))
