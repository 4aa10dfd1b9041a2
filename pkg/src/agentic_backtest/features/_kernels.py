"""Causal rolling kernels.

Every output slot ``t`` is computed from ``x[t-w+1 : t+1]`` alone (or, for the
recursive filters, from a left-to-right pass), so truncating the input at any
``t`` leaves ``out[:t+1]`` bit-identical.
"""
import numpy as np
from numba import njit


@njit(cache=True)
def rolling_sum(x, w):
    n = x.shape[0]
    out = np.full(n, np.nan)
    for t in range(w - 1, n):
        s = 0.0
        for j in range(t - w + 1, t + 1):
            s += x[j]
        out[t] = s
    return out


@njit(cache=True)
def rolling_mean(x, w):
    return rolling_sum(x, w) / w


@njit(cache=True)
def rolling_std(x, w):
    """Population (ddof=0) standard deviation, two-pass per window."""
    n = x.shape[0]
    out = np.full(n, np.nan)
    for t in range(w - 1, n):
        s = 0.0
        for j in range(t - w + 1, t + 1):
            s += x[j]
        m = s / w
        ss = 0.0
        for j in range(t - w + 1, t + 1):
            d = x[j] - m
            ss += d * d
        out[t] = np.sqrt(ss / w)
    return out


@njit(cache=True)
def rolling_max(x, w):
    n = x.shape[0]
    out = np.full(n, np.nan)
    for t in range(w - 1, n):
        m = x[t - w + 1]
        for j in range(t - w + 2, t + 1):
            if x[j] > m or np.isnan(x[j]):
                m = x[j]
        out[t] = m
    return out


@njit(cache=True)
def rolling_min(x, w):
    n = x.shape[0]
    out = np.full(n, np.nan)
    for t in range(w - 1, n):
        m = x[t - w + 1]
        for j in range(t - w + 2, t + 1):
            if x[j] < m or np.isnan(x[j]):
                m = x[j]
        out[t] = m
    return out


@njit(cache=True)
def rolling_sign_count(x, w):
    """Counts of strictly positive and strictly negative values per window."""
    n = x.shape[0]
    pos = np.full(n, np.nan)
    neg = np.full(n, np.nan)
    for t in range(w - 1, n):
        p = 0
        q = 0
        for j in range(t - w + 1, t + 1):
            if x[j] > 0:
                p += 1
            elif x[j] < 0:
                q += 1
        pos[t] = p
        neg[t] = q
    return pos, neg


@njit(cache=True)
def rolling_corr(x, y, w):
    """Pearson correlation per window; 0 when either side has zero variance."""
    n = x.shape[0]
    out = np.full(n, np.nan)
    for t in range(w - 1, n):
        sx = 0.0
        sy = 0.0
        for j in range(t - w + 1, t + 1):
            sx += x[j]
            sy += y[j]
        mx = sx / w
        my = sy / w
        cxy = 0.0
        cxx = 0.0
        cyy = 0.0
        for j in range(t - w + 1, t + 1):
            dx = x[j] - mx
            dy = y[j] - my
            cxy += dx * dy
            cxx += dx * dx
            cyy += dy * dy
        if cxx > 0.0 and cyy > 0.0:
            out[t] = cxy / np.sqrt(cxx * cyy)
        elif np.isnan(cxx) or np.isnan(cyy):
            out[t] = np.nan
        else:
            out[t] = 0.0
    return out


@njit(cache=True)
def ewm(x, alpha):
    """y_t = alpha*x_t + (1-alpha)*y_{t-1}, seeded at the first finite x.

    NaN inputs yield NaN and leave the state untouched.
    """
    n = x.shape[0]
    out = np.full(n, np.nan)
    seeded = False
    y = 0.0
    for t in range(n):
        v = x[t]
        if np.isnan(v):
            continue
        if not seeded:
            y = v
            seeded = True
        else:
            y = alpha * v + (1.0 - alpha) * y
        out[t] = y
    return out


@njit(cache=True)
def ewm_columns(X, alpha):
    out = np.empty_like(X)
    for k in range(X.shape[1]):
        out[:, k] = ewm(X[:, k], alpha)
    return out


@njit(cache=True)
def wilder_rsi(close, n):
    """Wilder RSI; first value at index n from simple averages of the first n changes.

    No gains and no losses gives 50; losses-free gives 100.
    """
    m = close.shape[0]
    out = np.full(m, np.nan)
    if m <= n:
        return out
    ag = 0.0
    al = 0.0
    for j in range(1, n + 1):
        d = close[j] - close[j - 1]
        if d > 0:
            ag += d
        else:
            al -= d
    ag /= n
    al /= n
    for t in range(n, m):
        if t > n:
            d = close[t] - close[t - 1]
            g = d if d > 0 else 0.0
            l = -d if d < 0 else 0.0
            ag = (ag * (n - 1) + g) / n
            al = (al * (n - 1) + l) / n
        if al == 0.0:
            out[t] = 50.0 if ag == 0.0 else 100.0
        else:
            out[t] = 100.0 - 100.0 / (1.0 + ag / al)
    return out


@njit(cache=True)
def rolling_persistence(r, w):
    """Fraction of the last w steps whose sign repeats the previous step's non-zero sign."""
    n = r.shape[0]
    out = np.full(n, np.nan)
    for t in range(n):
        if t - w < 0:
            continue
        ok = True
        c = 0
        for j in range(t - w + 1, t + 1):
            a = r[j]
            b = r[j - 1]
            if np.isnan(a) or np.isnan(b):
                ok = False
                break
            if a != 0.0 and np.sign(a) == np.sign(b):
                c += 1
        if ok:
            out[t] = c / w
    return out
