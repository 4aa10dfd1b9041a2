"""Independent reference implementations used as test oracles.

Nothing here imports the package's computational code. Each function is a
direct, slow transcription of the definition it checks (explicit windows,
plain loops, sorting) so that agreement with the optimized code is evidence
rather than tautology.
"""
from __future__ import annotations

import math
import struct
from collections import deque

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

HORIZONS = (1, 3, 5, 10, 15, 30, 60, 240)


# --------------------------------------------------------------------------
# rolling helpers (each window evaluated on its own)

def _win(x, w, fn):
    out = np.full(len(x), np.nan)
    if len(x) >= w:
        out[w - 1:] = [fn(row) for row in sliding_window_view(np.asarray(x, float), w)]
    return out


def _shift(x, k):
    out = np.full(len(x), np.nan)
    out[k:] = x[: len(x) - k]
    return out


def _div(num, den, fill):
    out = np.full(len(num), np.nan)
    for i, (a, b) in enumerate(zip(num, den)):
        if math.isnan(a) or math.isnan(b):
            continue
        out[i] = a / b if b != 0 else fill
    return out


def _pstd(row):
    m = sum(row) / len(row)
    return math.sqrt(sum((v - m) ** 2 for v in row) / len(row))


def ema_loop(x, alpha):
    out = np.full(len(x), np.nan)
    y = None
    for i, v in enumerate(x):
        if math.isnan(v):
            continue
        y = v if y is None else alpha * v + (1 - alpha) * y
        out[i] = y
    return out


def rsi_loop(close, n):
    out = np.full(len(close), np.nan)
    diffs = [close[i] - close[i - 1] for i in range(1, len(close))]
    if len(diffs) < n:
        return out
    gain = sum(max(d, 0.0) for d in diffs[:n]) / n
    loss = sum(max(-d, 0.0) for d in diffs[:n]) / n

    def value(g, l):
        if l == 0:
            return 50.0 if g == 0 else 100.0
        return 100.0 - 100.0 / (1.0 + g / l)

    out[n] = value(gain, loss)
    for t in range(n + 1, len(close)):
        d = diffs[t - 1]
        gain = (gain * (n - 1) + max(d, 0.0)) / n
        loss = (loss * (n - 1) + max(-d, 0.0)) / n
        out[t] = value(gain, loss)
    return out


def feature_oracle(o, h, l, c, v) -> dict[str, np.ndarray]:
    """Every raw feature column, recomputed from its written definition."""
    o, h, l, c, v = (np.asarray(a, float) for a in (o, h, l, c, v))
    n = len(c)
    r1 = np.r_[np.nan, np.log(c[1:] / c[:-1])]
    r1z = np.nan_to_num(r1)
    out: dict[str, np.ndarray] = {}
    lookback: dict[str, int] = {}

    def put(name, lb, values):
        values = np.array(values, float)
        values[:lb] = np.nan
        out[name] = values
        lookback[name] = lb

    def logret(k):
        return np.r_[np.full(k, np.nan), np.log(c[k:] / c[:-k])]

    put("ret_5", 5, logret(5))
    for w in (5, 15, 30, 60, 240):
        put(f"rv_{w}", w, np.sqrt(_win(r1z ** 2, w, sum)))
    put("ewm_vol_60", 60, np.sqrt(ema_loop(r1 ** 2, 2 / 61)))
    tp = (h + l + c) / 3
    num = _win(tp * v, 60, sum)
    den = _win(v, 60, sum)
    vwap = np.where(den == 0, _win(tp, 60, np.mean), num / np.where(den == 0, 1, den))
    put("mid_vwap_gap", 59, ((h + l) / 2) / vwap - 1)

    put("rsi_14", 14, rsi_loop(c, 14))
    put("rsi_30", 30, rsi_loop(c, 30))
    line = ema_loop(c, 2 / 13) - ema_loop(c, 2 / 27)
    sig = ema_loop(line, 2 / 10)
    put("macd_line", 26, line / c)
    put("macd_signal", 34, sig / c)
    put("macd_hist", 34, (line - sig) / c)
    mean20 = _win(c, 20, np.mean)
    sd20 = _win(c, 20, _pstd)
    up, lo = mean20 + 2 * sd20, mean20 - 2 * sd20
    put("bb_pos", 19, _div(c - lo, up - lo, 0.5))
    put("bb_width", 19, (up - lo) / mean20)
    put("bb_overbought", 19, (c > up).astype(float))
    put("bb_oversold", 19, (c < lo).astype(float))

    moms = {}
    for k in HORIZONS:
        mk = logret(k)
        moms[k] = mk
        put(f"mom_{k}", k, mk)
        put(f"strength_{k}", k, np.abs(mk) / math.sqrt(k))
        put(f"consistency_{k}", k,
            _win(r1z, k, lambda row: max(sum(row > 0), sum(row < 0)) / len(row)))
        prev_hi = _shift(_win(h, k, max), 1)
        prev_lo = _shift(_win(l, k, min), 1)
        put(f"breakout_{k}", k, np.where(c > prev_hi, 1.0, np.where(c < prev_lo, -1.0, 0.0)))
        put(f"accel_{k}", k + 1, mk - _shift(mk, 1))
        pers = np.full(n, np.nan)
        for t in range(k + 1, n):
            hits = sum(1 for j in range(t - k + 1, t + 1)
                       if r1[j] != 0 and np.sign(r1[j]) == np.sign(r1[j - 1]))
            pers[t] = hits / k
        put(f"persistence_{k}", k + 1, pers)
        if k > 1:
            sd = _win(r1z, k, _pstd)
            put(f"quality_{k}", k, _div(mk, sd * math.sqrt(k), 0.0))
            put(f"mom_align_{k}", k, np.sign(mk) * np.sign(r1))
    stack = np.array([moms[k] for k in HORIZONS])
    trend = stack.mean(axis=0)
    put("trend_signed", 240, trend)
    put("trend_strength", 240, np.abs(trend))
    put("trend_alignment", 240,
        np.maximum((stack > 0).sum(0), (stack < 0).sum(0)) / len(HORIZONS))

    sq = r1 ** 2
    garch = ema_loop(sq, 0.06)
    put("r1_sq", 1, sq)
    put("garch_var", 30, garch)
    put("garch_shock", 30, _div(sq, garch, 0.0))
    put("vol_cluster", 2, np.abs(r1) * np.abs(_shift(r1, 1)))
    vs = _win(r1z, 15, _pstd)
    vl = _win(r1z, 240, _pstd)
    ratio = _div(vs, vl, 1.0)
    put("vol_short", 15, vs)
    put("vol_long", 240, vl)
    put("vol_ratio", 240, ratio)
    regime = np.select([ratio < 0.8, ratio <= 1.2, ratio <= 1.5], [0.0, 1.0, 2.0], 3.0)
    put("vol_regime", 240, regime)
    rng = (h - l) / c
    put("bar_range", 1, rng)
    put("range_expansion", 20, _div(rng, _shift(_win(rng, 20, np.mean), 1), 1.0))

    put("dist_resistance_20", 19, _win(h, 20, max) / c - 1)
    put("dist_support_20", 19, c / _win(l, 20, min) - 1)
    hi20 = _shift(_win(h, 20, max), 1)
    lo20 = _shift(_win(l, 20, min), 1)
    put("breakout_20", 20, np.where(c > hi20, 1.0, np.where(c < lo20, -1.0, 0.0)))
    for w in (20, 60):
        put(f"z_{w}", w - 1, _div(c - _win(c, w, np.mean), _win(c, w, _pstd), 0.0))

    lv = np.log1p(v)
    put("log_volume", 1, lv)
    put("volume_ratio_20", 19, _div(v, _win(v, 20, np.mean), 1.0))
    for w in (20, 60):
        put(f"volume_z_{w}", w - 1, _div(v - _win(v, w, np.mean), _win(v, w, _pstd), 0.0))
    sv = np.sign(c - o) * v
    for w in (5, 15):
        put(f"signed_volume_{w}", w - 1, _div(_win(sv, w, sum), _win(v, w, sum), 0.0))
    corr = np.full(n, np.nan)
    for t in range(19, n):
        x, y = r1z[t - 19:t + 1], lv[t - 19:t + 1]
        dx, dy = x - x.mean(), y - y.mean()
        sxx, syy = float(dx @ dx), float(dy @ dy)
        corr[t] = float(dx @ dy) / math.sqrt(sxx * syy) if sxx > 0 and syy > 0 else 0.0
    put("pv_corr_20", 20, corr)
    v10 = _win(v, 10, sum)
    vtrend = np.log((v10 + 1) / (_shift(v10, 10) + 1))
    ps = np.sign(logret(20))
    put("pv_divergence_20", 20, np.where(ps != np.sign(vtrend), ps, 0.0))
    return out


# --------------------------------------------------------------------------
# robust statistics

def sorted_median(values) -> float:
    s = sorted(values)
    m = len(s) // 2
    return s[m] if len(s) % 2 else 0.5 * (s[m - 1] + s[m])


def sorted_percentile(values, p) -> float:
    """Linear-interpolation percentile, p in [0, 100]."""
    s = sorted(values)
    pos = (len(s) - 1) * p / 100.0
    lo = int(math.floor(pos))
    hi = min(lo + 1, len(s) - 1)
    return s[lo] + (s[hi] - s[lo]) * (pos - lo)


def mad_tanh(window, current) -> float:
    med = sorted_median(window)
    mad = sorted_median([abs(x - med) for x in window])
    if mad == 0:
        return 0.0
    return math.tanh((current - med) / (1.4826 * mad))


def spike_flags(closes, zmax=8.0, window=1440, min_periods=20) -> list[int]:
    """Indices flagged by a robust-z test of returns against the last kept close."""
    flags = []
    hist: list[float] = []
    last = closes[0]
    for i in range(1, len(closes)):
        r = math.log(closes[i] / last)
        bad = False
        if len(hist) >= min_periods:
            w = hist[-window:]
            med = sorted_median(w)
            scale = 1.4826 * sorted_median([abs(x - med) for x in w])
            bad = abs(r - med) > zmax * scale if scale > 0 else abs(r - med) > 0
        if bad:
            flags.append(i)
            continue
        hist.append(r)
        last = closes[i]
    return flags


# --------------------------------------------------------------------------
# linear models and ranks

def ridge_normal_equations(X, y, lam):
    """(X'X + lam*I)^-1 X'y on centered data, intercept from the means."""
    X = np.asarray(X, float)
    y = np.asarray(y, float)
    xm, ym = X.mean(0), y.mean()
    Xc, yc = X - xm, y - ym
    w = np.linalg.inv(Xc.T @ Xc + lam * np.eye(X.shape[1])) @ (Xc.T @ yc)
    return w, ym - xm @ w


def average_ranks(x) -> np.ndarray:
    x = list(x)
    order = sorted(range(len(x)), key=lambda i: x[i])
    ranks = [0.0] * len(x)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and x[order[j + 1]] == x[order[i]]:
            j += 1
        for k in range(i, j + 1):
            ranks[order[k]] = (i + j) / 2 + 1
        i = j + 1
    return np.array(ranks)


def pearson(a, b) -> float:
    a = np.asarray(a, float) - np.mean(a)
    b = np.asarray(b, float) - np.mean(b)
    return float(a @ b / math.sqrt((a @ a) * (b @ b)))


def best_stump(x, y, l2=0.0):
    """Exhaustive split search on one feature for squared loss (hessian 1 per row)."""
    order = np.argsort(x, kind="stable")
    xs, ys = np.asarray(x)[order], np.asarray(y, float)[order]
    g = ys.mean() - ys  # gradient of 0.5*(pred - y)^2 at the mean base score
    best = None
    for i in range(1, len(xs)):
        if xs[i] == xs[i - 1]:
            continue
        gl, gr = g[:i].sum(), g[i:].sum()
        hl, hr = i, len(xs) - i
        gain = gl * gl / (hl + l2) + gr * gr / (hr + l2)
        if best is None or gain > best[0]:
            best = (gain, 0.5 * (xs[i - 1] + xs[i]), -gl / (hl + l2), -gr / (hr + l2), xs[i - 1], xs[i])
    return best


# --------------------------------------------------------------------------
# walk-forward schedule

def enumerate_blocks(n, retrain=1440, min_train=10080):
    """(train_lo, valid_lo, valid_hi, test_lo, test_hi) per block by plain arithmetic."""
    blocks = []
    start = min_train
    while start < n:
        stop = min(start + retrain, n)
        blocks.append((start - min_train, start - retrain, start, start, stop))
        start += retrain
    return blocks


# --------------------------------------------------------------------------
# metrics

def metrics_oracle(timestamps, equity, initial, fills, periods_per_year=365, bars_per_day=1440.0):
    """Straight-line recomputation of every report field (UTC days)."""
    day = [int(t) // 86_400_000 for t in timestamps]
    eod = []
    for i in range(len(equity)):
        if i == len(equity) - 1 or day[i + 1] != day[i]:
            eod.append(float(equity[i]))
    rets = []
    prev = initial
    for e in eod:
        rets.append(e / prev - 1)
        prev = e
    n_days = len(rets)
    total = equity[-1] / initial - 1
    annual = (1 + total) ** (periods_per_year / n_days) - 1
    mean = sum(rets) / n_days
    if n_days > 1:
        var = sum((r - mean) ** 2 for r in rets) / (n_days - 1)
        sd = math.sqrt(var)
    else:
        sd = 0.0
    sharpe_d = mean / sd if sd > 0 else 0.0
    peak = initial
    mdd = 0.0
    for e in [initial] + list(equity):
        peak = max(peak, e)
        mdd = min(mdd, e / peak - 1)
    by_ts: dict[int, float] = {}
    for f in fills:
        by_ts[f.timestamp] = by_ts.get(f.timestamp, 0.0) + abs(f.delta_weight)
    trades = fifo_trades(fills, None, None)
    closed = trades
    wins = sum(1 for t in closed if t[2] > 0)
    hours = sorted((t[1] - t[0]) / 3_600_000 for t in closed)
    if hours:
        m = len(hours) // 2
        med_h = hours[m] if len(hours) % 2 else 0.5 * (hours[m - 1] + hours[m])
    else:
        med_h = 0.0
    return {
        "totalReturn": total,
        "annualReturn": annual,
        "volatility": sd * math.sqrt(periods_per_year),
        "sharpe": sharpe_d * math.sqrt(periods_per_year),
        "maxDrawdown": mdd,
        "calmar": annual / abs(mdd) if mdd < 0 else None,
        "turnover": sum(by_ts.values()) / len(by_ts) if by_ts else 0.0,
        "winRate": wins / len(closed) if closed else 0.0,
        "tradesPerDay": len(closed) / (len(equity) / bars_per_day),
        "avgHoldingHours": sum(hours) / len(hours) if hours else 0.0,
        "medianHoldingHours": med_h,
        "avgDailyReturn": mean,
        "nTrades": len(closed),
        "nDays": n_days,
        "sharpeDaily": sharpe_d,
        "dailyWinRate": sum(1 for r in rets if r > 0) / n_days,
        "finalEquity": float(equity[-1]),
    }


def fifo_trades(fills, final_prices, final_ts):
    """(entry_ts, exit_ts, pnl) per matched lot, first-in-first-out per symbol."""
    books: dict[str, deque] = {}
    out = []
    for f in fills:
        book = books.setdefault(f.symbol, deque())
        qty = f.shares
        fee = f.cost / abs(f.shares) if f.shares else 0.0
        while abs(qty) > 1e-12 * abs(f.shares) and book and (book[0][0] > 0) != (qty > 0):
            lq, lp, lt, lf = book[0]
            m = min(abs(lq), abs(qty))
            s = 1 if lq > 0 else -1
            out.append((lt, f.timestamp, s * m * (f.price - lp) - m * (lf + fee)))
            rest = abs(lq) - m
            if rest > abs(lq) * 1e-12:
                book[0] = (s * rest, lp, lt, lf)
            else:
                book.popleft()
            qty += s * m
        if abs(qty) > 1e-12 * abs(f.shares):
            book.append((qty, f.price, f.timestamp, fee))
    if final_prices is not None:
        for sym, book in books.items():
            for lq, lp, lt, lf in book:
                s = 1 if lq > 0 else -1
                out.append((lt, final_ts, s * abs(lq) * (final_prices[sym] - lp) - abs(lq) * lf))
    return out


# --------------------------------------------------------------------------
# SHA-256 written out from FIPS 180-4

_K = [
    0x428a2f98, 0x71374491, 0xb5c0fbcf, 0xe9b5dba5, 0x3956c25b, 0x59f111f1, 0x923f82a4, 0xab1c5ed5,
    0xd807aa98, 0x12835b01, 0x243185be, 0x550c7dc3, 0x72be5d74, 0x80deb1fe, 0x9bdc06a7, 0xc19bf174,
    0xe49b69c1, 0xefbe4786, 0x0fc19dc6, 0x240ca1cc, 0x2de92c6f, 0x4a7484aa, 0x5cb0a9dc, 0x76f988da,
    0x983e5152, 0xa831c66d, 0xb00327c8, 0xbf597fc7, 0xc6e00bf3, 0xd5a79147, 0x06ca6351, 0x14292967,
    0x27b70a85, 0x2e1b2138, 0x4d2c6dfc, 0x53380d13, 0x650a7354, 0x766a0abb, 0x81c2c92e, 0x92722c85,
    0xa2bfe8a1, 0xa81a664b, 0xc24b8b70, 0xc76c51a3, 0xd192e819, 0xd6990624, 0xf40e3585, 0x106aa070,
    0x19a4c116, 0x1e376c08, 0x2748774c, 0x34b0bcb5, 0x391c0cb3, 0x4ed8aa4a, 0x5b9cca4f, 0x682e6ff3,
    0x748f82ee, 0x78a5636f, 0x84c87814, 0x8cc70208, 0x90befffa, 0xa4506ceb, 0xbef9a3f7, 0xc67178f2,
]
_H0 = [0x6a09e667, 0xbb67ae85, 0x3c6ef372, 0xa54ff53a, 0x510e527f, 0x9b05688c, 0x1f83d9ab, 0x5be0cd19]


def _rotr(x, n):
    return ((x >> n) | (x << (32 - n))) & 0xFFFFFFFF


def sha256_reference(data: bytes) -> str:
    msg = bytearray(data)
    bit_len = len(msg) * 8
    msg.append(0x80)
    while len(msg) % 64 != 56:
        msg.append(0)
    msg += struct.pack(">Q", bit_len)
    h = list(_H0)
    for off in range(0, len(msg), 64):
        w = list(struct.unpack(">16I", msg[off:off + 64]))
        for i in range(16, 64):
            s0 = _rotr(w[i - 15], 7) ^ _rotr(w[i - 15], 18) ^ (w[i - 15] >> 3)
            s1 = _rotr(w[i - 2], 17) ^ _rotr(w[i - 2], 19) ^ (w[i - 2] >> 10)
            w.append((w[i - 16] + s0 + w[i - 7] + s1) & 0xFFFFFFFF)
        a, b, c, d, e, f, g, hh = h
        for i in range(64):
            t1 = (hh + (_rotr(e, 6) ^ _rotr(e, 11) ^ _rotr(e, 25)) + ((e & f) ^ (~e & g)) + _K[i] + w[i])
            t2 = (_rotr(a, 2) ^ _rotr(a, 13) ^ _rotr(a, 22)) + ((a & b) ^ (a & c) ^ (b & c))
            hh, g, f, e, d, c, b, a = g, f, e, (d + t1) & 0xFFFFFFFF, c, b, a, (t1 + t2) & 0xFFFFFFFF
        h = [(x + y) & 0xFFFFFFFF for x, y in zip(h, (a, b, c, d, e, f, g, hh))]
    return "".join(f"{x:08x}" for x in h)
