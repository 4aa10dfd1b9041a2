"""Risk stack: normalization, sizing, drawdown controls, smoothing and gates.

:class:`RiskEngine` runs the full per-tick sequence for one symbol. The
building blocks are plain functions so each rule can be checked alone.
"""
from __future__ import annotations

import json
import logging
import math
from collections import deque
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .errors import ParameterError
from .signal import Regime

log = logging.getLogger(__name__)

MAD_CONSISTENCY = 1.4826
MINUTE_MS = 60_000
_OPEN_BELOW_ONE = float(np.nextafter(1.0, 0.0))


def _regime_map(d: Mapping) -> dict[str, float]:
    return {str(Regime(k)): float(v) for k, v in d.items()}


@dataclass(frozen=True)
class SizingConfig:
    base_size: Mapping[str, float] = field(default_factory=lambda: {
        "StrongTrend": 1.8, "Breakout": 2.5, "Sideways": 0.7, "HighVol": 0.8, "Mixed": 1.0})
    momentum_boost: float = 0.30
    momentum_trigger: float = 0.70
    unit_size: float = 0.05
    position_range: tuple[float, float] = (0.03, 0.05)
    max_leverage: float = 4.0
    entry_percentile: Mapping[str, float] = field(default_factory=lambda: {
        "StrongTrend": 45.0, "Breakout": 50.0, "Sideways": 35.0, "HighVol": 40.0, "Mixed": 40.0})
    history_window: int = 1440
    min_history: int = 30
    stop_loss: float = 0.008
    vol_scale_range: tuple[float, float] = (0.5, 1.5)
    flatten_drawdown: float = -0.03
    alpha1: float = 0.25
    alpha2: float = 0.15
    deadband: float = 0.08
    # size of one deadband unit in position terms; 1.0 compares raw fractions
    deadband_unit: float = 1.0
    min_hold_ms: int = 8 * MINUTE_MS
    vol_cap: float = 0.005

    def __post_init__(self):
        object.__setattr__(self, "base_size", _regime_map(self.base_size))
        object.__setattr__(self, "entry_percentile", _regime_map(self.entry_percentile))
        lo, hi = self.position_range
        if not (0 < lo <= hi):
            raise ParameterError("position_range must be ordered and positive", module="risk")
        if any(v <= 0 for v in self.base_size.values()) or self.max_leverage <= 0:
            raise ParameterError("sizes and leverage must be positive", module="risk")
        for a in (self.alpha1, self.alpha2):
            if not (0 < a <= 1):
                raise ParameterError("smoothing alphas must be in (0, 1]", module="risk")
        if self.deadband < 0 or self.deadband_unit <= 0 or self.min_hold_ms < 0:
            raise ParameterError("deadband/hold settings out of range", module="risk")
        if self.min_history < 1 or self.history_window < self.min_history:
            raise ParameterError("history_window must be >= min_history >= 1", module="risk")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["base_size"] = dict(self.base_size)
        d["entry_percentile"] = dict(self.entry_percentile)
        d["position_range"] = list(self.position_range)
        d["vol_scale_range"] = list(self.vol_scale_range)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "SizingConfig":
        d = dict(d)
        for k in ("position_range", "vol_scale_range"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)


@dataclass
class RiskState:
    equity_peak: float = 0.0
    current_drawdown: float = 0.0
    position: float = 0.0
    entry_price: float = math.nan
    hold_since: int | None = None
    smooth1: float = 0.0
    smooth2: float = 0.0


@dataclass(frozen=True)
class RiskGates:
    vol_ok: bool
    dd_ok: bool
    position_ok: bool
    leverage_ok: bool
    leakage_checked: bool

    @property
    def all_ok(self) -> bool:
        return self.vol_ok and self.dd_ok and self.position_ok and self.leverage_ok and self.leakage_checked

    def to_dict(self) -> dict:
        return {"vol_ok": self.vol_ok, "dd_ok": self.dd_ok, "position_ok": self.position_ok,
                "leverage_ok": self.leverage_ok, "leakageChecked": self.leakage_checked}


@dataclass(frozen=True)
class Decision:
    ts: int
    regime: str
    normalized: float
    gate_pass: bool
    dd_mult: float
    target: float
    position: float
    reason: str

    def to_dict(self) -> dict:
        return {"ts": self.ts, "regime": self.regime, "normalized": self.normalized,
                "gatePass": self.gate_pass, "ddMult": self.dd_mult, "target": self.target,
                "position": self.position, "reason": self.reason}


# ---------------------------------------------------------------- rules
def mad_tanh_normalize(window: Iterable[float], current: float) -> float:
    """``tanh((current - median) / (1.4826 * MAD))``; 0 when MAD is 0 or the window is empty.

    The result is held strictly inside (-1, 1) even where tanh saturates in
    double precision.
    """
    w = np.asarray(window, dtype=float)
    if w.size == 0:
        return 0.0
    med = float(np.median(w))
    mad = float(np.median(np.abs(w - med)))
    if mad == 0.0:
        return 0.0
    v = math.tanh((current - med) / (MAD_CONSISTENCY * mad))
    return max(-_OPEN_BELOW_ONE, min(_OPEN_BELOW_ONE, v))


def entry_gate(normalized: float, regime: Regime | str, history: Iterable[float],
               config: SizingConfig | None = None) -> bool:
    """Pass iff ``|normalized|`` reaches the regime's percentile of recent ``|score|`` values."""
    cfg = config or DEFAULT_SIZING
    h = np.asarray(history, dtype=float)
    if h.size < cfg.min_history:
        return False
    pct = cfg.entry_percentile[str(Regime(regime))]
    return abs(normalized) >= float(np.percentile(h, pct))


def percentile_rank(history: Iterable[float], current: float) -> float:
    """Fraction of past values strictly below ``current``."""
    h = np.asarray(history, dtype=float)
    if h.size == 0:
        return 0.0
    return float(np.count_nonzero(h < current)) / h.size


def size_position(normalized: float, regime: Regime | str, momentum_percentile: float,
                  config: SizingConfig | None = None) -> float:
    """Signed fraction of capital: base size, momentum boost, then the 3%..5% clamp."""
    cfg = config or DEFAULT_SIZING
    if normalized == 0:
        return 0.0
    boost = cfg.momentum_boost if momentum_percentile > cfg.momentum_trigger else 0.0
    raw = cfg.base_size[str(Regime(regime))] * (1.0 + boost) * abs(normalized) * cfg.unit_size
    lo, hi = cfg.position_range
    return math.copysign(min(hi, max(lo, raw)), normalized)


def drawdown_multiplier(dd: float) -> float:
    """min(tier multiplier, step multiplier) for a drawdown ``dd <= 0``."""
    if dd > 0:
        raise ParameterError(f"drawdown must be <= 0, got {dd}", module="risk")
    if dd < -0.03:
        m1 = 0.5
    elif dd < -0.02:
        m1 = 0.7
    elif dd < -0.01:
        m1 = 0.8
    else:
        m1 = 1.0
    if dd < -0.025:
        m2 = 0.25
    elif dd < -0.015:
        m2 = 0.5
    else:
        m2 = 1.0
    return min(m1, m2)


def vol_scale_from_ratio(vol_ratio: float, lo: float = 0.5, hi: float = 1.5) -> float:
    if not math.isfinite(vol_ratio):
        return 1.0
    return min(hi, max(lo, vol_ratio))


def stop_loss_check(entry_price: float, current_price: float, vol_scale: float = 1.0,
                    side: float = 1.0, config: SizingConfig | None = None) -> bool:
    """True (exit) when the signed return from entry is at or below ``-0.8% * volScale``."""
    cfg = config or DEFAULT_SIZING
    lo, hi = cfg.vol_scale_range
    if not (lo <= vol_scale <= hi):
        log.warning("volScale %.4f outside [%s, %s]; clamped", vol_scale, lo, hi)
        vol_scale = min(hi, max(lo, vol_scale))
    ret = math.copysign(1.0, side) * (current_price / entry_price - 1.0)
    return ret <= -cfg.stop_loss * vol_scale


def flatten_check(dd: float, config: SizingConfig | None = None) -> bool:
    cfg = config or DEFAULT_SIZING
    return dd <= cfg.flatten_drawdown


def smooth_and_hold(state: RiskState, target: float, now: int,
                    config: SizingConfig | None = None) -> tuple[float, str]:
    """Two-stage EWM of ``target``, then the deadband and minimum-hold rules.

    Mutates ``state`` and returns ``(position, reason)``. A smoothed value
    inside the deadband around zero counts as a request to close, so a
    decaying signal can actually reach flat.
    """
    cfg = config or DEFAULT_SIZING
    state.smooth1 += cfg.alpha1 * (target - state.smooth1)
    state.smooth2 += cfg.alpha2 * (state.smooth1 - state.smooth2)
    band = cfg.deadband * cfg.deadband_unit
    desired = state.smooth2
    pos = state.position
    if abs(desired) < band:
        desired = 0.0
    if desired == pos:
        return pos, "unchanged"
    closing = desired == 0.0 and pos != 0.0
    if not closing and abs(desired - pos) < band:
        return pos, "deadband"
    reversing = pos != 0.0 and desired != 0.0 and math.copysign(1, desired) != math.copysign(1, pos)
    held = now - state.hold_since if state.hold_since is not None else math.inf
    if (reversing or closing) and held < cfg.min_hold_ms:
        return pos, "min-hold"
    if pos == 0.0 or reversing:
        state.hold_since = now
    state.position = desired
    return desired, "close" if closing else ("reverse" if reversing else ("open" if pos == 0.0 else "resize"))


def evaluate_gates(state: RiskState, proposed: float, vol_estimate: float,
                   config: SizingConfig | None = None, *, gross: float | None = None,
                   leakage_checked: bool = True) -> RiskGates:
    cfg = config or DEFAULT_SIZING
    g = abs(proposed) if gross is None else gross
    return RiskGates(
        vol_ok=bool(math.isfinite(vol_estimate) and vol_estimate <= cfg.vol_cap),
        dd_ok=state.current_drawdown > cfg.flatten_drawdown,
        position_ok=abs(proposed) <= cfg.position_range[1] + 1e-15,
        leverage_ok=g <= cfg.max_leverage,
        leakage_checked=bool(leakage_checked),
    )


DEFAULT_SIZING = SizingConfig()


# --------------------------------------------------------------- engine
class RiskEngine:
    """Sequential per-symbol risk state machine.

    Each :meth:`step` consumes one blended signal value and the current
    equity and returns the decided position as a signed capital fraction.
    Flatten, stop-loss and drawdown caps act immediately and are not subject
    to the minimum hold.
    """

    def __init__(self, config: SizingConfig | None = None, *, leakage_checked: bool = True):
        self.config = config or DEFAULT_SIZING
        self.state = RiskState()
        w = self.config.history_window
        self.raw_hist: deque[float] = deque(maxlen=w)
        self.abs_hist: deque[float] = deque(maxlen=w)
        self.mom_hist: deque[float] = deque(maxlen=w)
        self.leakage_checked = leakage_checked
        self.decisions: list[Decision] = []

    def mark(self, equity: float) -> float:
        s = self.state
        s.equity_peak = max(s.equity_peak, equity)
        s.current_drawdown = min(0.0, equity / s.equity_peak - 1.0) if s.equity_peak > 0 else 0.0
        return s.current_drawdown

    def step(self, ts: int, raw: float, regime: Regime | str, momentum: float, price: float,
             vol_ratio: float, vol_short: float, equity: float) -> Decision:
        cfg, s = self.config, self.state
        regime = str(Regime(regime))
        dd = self.mark(equity)
        ready = len(self.raw_hist) >= cfg.min_history
        normalized = mad_tanh_normalize(self.raw_hist, raw) if ready else 0.0
        gate = entry_gate(normalized, regime, self.abs_hist, cfg)
        mom_pct = percentile_rank(self.mom_hist, momentum)
        ddm = drawdown_multiplier(dd)
        target = size_position(normalized, regime, mom_pct, cfg) * ddm if gate else 0.0
        self.raw_hist.append(raw)
        self.abs_hist.append(abs(normalized))
        self.mom_hist.append(momentum)

        prev = s.position
        if flatten_check(dd, cfg):
            # keep the smoothers running so they do not jump on recovery
            s.smooth1 += cfg.alpha1 * (target - s.smooth1)
            s.smooth2 += cfg.alpha2 * (s.smooth1 - s.smooth2)
            s.position, reason = 0.0, "flatten"
        elif prev != 0.0 and stop_loss_check(s.entry_price, price, vol_scale_from_ratio(vol_ratio),
                                             prev, cfg):
            s.smooth1 += cfg.alpha1 * (target - s.smooth1)
            s.smooth2 += cfg.alpha2 * (s.smooth1 - s.smooth2)
            s.position, reason = 0.0, "stop-loss"
        else:
            hold_since = s.hold_since
            _, reason = smooth_and_hold(s, target, ts, cfg)
            if abs(s.position) > abs(prev) or s.position * prev < 0:
                gates = evaluate_gates(s, s.position, vol_short, cfg, leakage_checked=self.leakage_checked)
                if not gates.all_ok:
                    s.position, s.hold_since = prev, hold_since
                    reason = "gate-blocked:" + ",".join(k for k, v in gates.to_dict().items() if not v)
        cap = cfg.position_range[1] * ddm
        if abs(s.position) > cap:
            s.position = math.copysign(cap, s.position)
            reason += "+dd-cap"
        if s.position != 0.0 and (prev == 0.0 or s.position * prev < 0):
            s.entry_price = price
        if s.position == 0.0:
            s.entry_price = math.nan
        d = Decision(int(ts), regime, float(normalized), bool(gate), float(ddm), float(target),
                     float(s.position), reason)
        self.decisions.append(d)
        return d

    def write_log(self, path: str | Path) -> Path:
        path = Path(path)
        with path.open("w") as fh:
            for d in self.decisions:
                fh.write(json.dumps(d.to_dict(), sort_keys=True) + "\n")
        return path
