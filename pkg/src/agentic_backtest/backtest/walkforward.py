"""Walk-forward driver: fit per block, trade only the test ranges, gate every context.

Model fits only ever see rows of their block's train and validation ranges.
The execution loop then runs once, sequentially, across all test ranges so
that the risk state and equity carry over from block to block.
"""
from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from ..errors import DataError, LeakageError, ParameterError
from ..features import (FeatureFrame, apply_preprocess, compute_raw_features, ewm_smooth,
                        fit_preprocess)
from ..ingest import BarSeries, freq_to_ms
from ..memory import Context, MemoryEntry, MemoryStore, Namespace, check_context, features_hash
from ..portfolio import (CRYPTO_TURNOVER, EQUITY_TURNOVER, TargetPortfolio, TurnoverBudget,
                         buy_and_hold, enforce_turnover, equal_weight_weekly, long_flat_target,
                         signal_weights)
from ..predictor import FittedModel, GbtConfig, WalkForwardSchedule, build_labels, build_schedule, fit_gbt
from ..predictor import fit_ridge
from ..risk import RiskEngine, SizingConfig
from ..signal import SignalTrace, build_signal
from .engine import INITIAL_CAPITAL, ExecutionConfig, MarketView, SimResult, schedule_strategy, simulate
from .metrics import DAY_MS, MetricsReport, compute_metrics

log = logging.getLogger(__name__)

INJECTIONS = ("test-prices-in-train", "raw-metrics-summary", "eval-objective")


@dataclass(frozen=True)
class PipelineConfig:
    market: str = "crypto"
    predictor: str = "gbt"
    gbt: GbtConfig = field(default_factory=GbtConfig)
    ridge_alpha: float = 1.0
    sizing: SizingConfig = field(default_factory=lambda: SizingConfig(deadband_unit=0.05))
    execution: ExecutionConfig = field(default_factory=ExecutionConfig)
    capital: float = INITIAL_CAPITAL
    retrain_every: int = 1440
    min_train_window: int = 10080
    horizon: int = 1
    gap: int = 2
    seed: int = 7
    position_cap: float = 0.05
    turnover_limit: float | None = None
    rebalance_every: int = 7
    baselines: tuple[str, ...] = ("buyhold", "equalweight")

    def __post_init__(self):
        if self.market not in ("crypto", "stock"):
            raise ParameterError(f"market must be crypto or stock, got {self.market!r}", module="backtest")
        if self.predictor not in ("gbt", "ridge"):
            raise ParameterError(f"predictor must be gbt or ridge, got {self.predictor!r}",
                                 module="backtest")
        bad = set(self.baselines) - {"buyhold", "equalweight"}
        if bad:
            raise ParameterError(f"unknown baselines {sorted(bad)}", module="backtest")

    @property
    def turnover(self) -> float:
        if self.turnover_limit is not None:
            return self.turnover_limit
        return CRYPTO_TURNOVER if self.market == "crypto" else EQUITY_TURNOVER


@dataclass
class BlockFit:
    index: int
    symbol: str
    model: FittedModel
    kept_columns: tuple[str, ...]
    n_train: int
    n_valid: int
    contexts: list[Context]
    entry: MemoryEntry

    def summary(self) -> dict:
        return {"index": self.index, "symbol": self.symbol, "nTrain": self.n_train, "nValid": self.n_valid,
                "nFeatures": len(self.kept_columns), "bestRound": self.model.best_round,
                "stoppedAtRound": self.model.stopped_at_round, "memoryId": self.entry.uuid}


@dataclass
class WalkForwardResult:
    report: MetricsReport
    schedule: WalkForwardSchedule
    sim: SimResult | None
    signals: dict[str, SignalTrace]
    blocks: list[BlockFit]
    decisions: list
    contexts: list[tuple[Context, tuple[int, int]]]
    baselines: dict[str, MetricsReport]
    memory: MemoryStore

    def to_report(self, config_echo: Mapping, run_id: str) -> dict:
        return {
            "runId": run_id,
            "config": dict(config_echo),
            "metrics": self.report.to_dict(),
            "baselines": {k: v.to_dict() for k, v in sorted(self.baselines.items())},
            "blocks": [b.summary() for b in self.blocks],
            "schedule": {"n": self.schedule.n, "retrainEvery": self.schedule.retrain_every,
                         "minTrainWindow": self.schedule.min_train_window,
                         "nBlocks": len(self.schedule.blocks)},
            "events": self.sim.events if self.sim is not None else [],
        }


def _span(ts: np.ndarray, rng: tuple[int, int], step: int) -> tuple[int, int]:
    a, b = rng
    return (int(ts[a]), int(ts[b - 1]) + step) if b > a else (0, 0)


def _block_seed(seed: int, index: int, sym_index: int) -> int:
    return int(np.random.SeedSequence([seed, index, sym_index]).generate_state(1)[0])


def _fit(kind: str, cfg: PipelineConfig, Xtr, ytr, Xva, yva, seed: int, names) -> FittedModel:
    if kind == "ridge":
        return fit_ridge(Xtr, ytr, cfg.ridge_alpha, feature_names=names)
    return fit_gbt(Xtr, ytr, Xva, yva, config=cfg.gbt, seed=seed, feature_names=names)


def _finite_rows(values: np.ndarray, lo: int, hi: int, labelled: int) -> np.ndarray:
    hi = min(hi, labelled)
    if hi <= lo:
        return np.zeros(0, dtype=np.int64)
    ok = np.isfinite(values[lo:hi]).all(axis=1)
    return lo + np.flatnonzero(ok)


def _inject(kind: str | None, where: str, ctx: Context, series: BarSeries, test: tuple[int, int]) -> Context:
    """Deliberately corrupt a context to exercise the leakage gate (testing hook)."""
    if kind == "test-prices-in-train" and where == "train":
        a, b = test
        leak = {str(int(t)): float(c) for t, c in zip(series.timestamps[a:b], series.close[a:b])}
        return replace(ctx, diagnostics={**ctx.diagnostics, "prices": leak})
    if kind == "eval-objective" and where == "train":
        return replace(ctx, objective="maximize test-window Sharpe")
    return ctx


def fit_block(series: BarSeries, raw: FeatureFrame, smooth: FeatureFrame, y: np.ndarray, n_labelled: int,
              block, cfg: PipelineConfig, importances: Mapping[str, float] | None, memory: MemoryStore,
              *, sym_index: int = 0, inject: str | None = None) -> tuple[BlockFit, np.ndarray, np.ndarray]:
    """Fit one block's preprocessing and model.

    Returns the fit, the validation predictions and the full scaled matrix.
    """
    ts, step = series.timestamps, freq_to_ms(series.frequency)
    tr = _finite_rows(smooth.values, *block.train, n_labelled)
    va = _finite_rows(smooth.values, *block.valid, n_labelled)
    if len(tr) < 2:
        raise DataError(f"block {block.index}: {len(tr)} usable training rows", module="backtest",
                        hint="lengthen the minimum training window or the data")
    state = fit_preprocess(smooth, tr, importances)
    X = apply_preprocess(smooth, state).values
    names = list(state.kept_columns)
    seed = _block_seed(cfg.seed, block.index, sym_index)
    model = _fit(cfg.predictor, cfg, X[tr], y[tr], X[va] if len(va) else None,
                 y[va] if len(va) else None, seed, names)
    eval_window = _span(ts, block.test, step)
    visible = (int(ts[block.train[0]]), _span(ts, block.valid, step)[1] or _span(ts, block.train, step)[1])
    fh = features_hash(X[tr])
    model_id = hashlib.sha256(model.to_json().encode()).hexdigest()
    ctxs = []
    for role, inputs, diag in (
            ("feature-agent", {"features": fh}, {"nKept": len(names), "nDropped": len(state.dropped)}),
            ("model-agent", {"features": fh, "model": model_id},
             {"bestRound": model.best_round, "stoppedAtRound": model.stopped_at_round,
              "finalTrainLoss": float(model.train_loss_curve[-1]) if len(model.train_loss_curve) else 0.0})):
        ctx = Context(f"block-{block.index}/{series.symbol}/{role}", role, "train", visible,
                      (series.symbol,), inputs, {}, diag, "minimize validation mean squared error")
        ctx = _inject(inject, "train", ctx, series, block.test)
        check_context(ctx, eval_window)
        ctxs.append(ctx)
    summary = {"bestRound": model.best_round, "stoppedAtRound": model.stopped_at_round,
               "nTrain": int(len(tr)), "nValid": int(len(va)), "nFeatures": len(names), "modelId": model_id}
    if inject == "raw-metrics-summary":
        summary["returns"] = [float(v) for v in y[tr][:1000]]
    entry = MemoryEntry.create("model-agent", f"block-{block.index}/{series.symbol}/fit", fh, summary,
                               visible[1])
    memory.write(entry, Namespace.TRAIN)
    pv = model.predict(X[va]) if len(va) else np.zeros(0)
    return BlockFit(block.index, series.symbol, model, state.kept_columns, len(tr), len(va), ctxs, entry), pv, X


def _signals_for_symbol(series: BarSeries, cfg: PipelineConfig, schedule: WalkForwardSchedule,
                        memory: MemoryStore, sym_index: int, inject: str | None):
    raw = compute_raw_features(series)
    smooth = ewm_smooth(raw)
    labels = build_labels(series, cfg.horizon, cfg.gap)
    y = np.full(len(series), np.nan)
    y[labels.index] = labels.y
    n_lab = len(labels.index)
    importances = None
    fits, traces = [], []
    for block in schedule.blocks:
        fit, pv, X = fit_block(series, raw, smooth, y, n_lab, block, cfg, importances, memory,
                               sym_index=sym_index, inject=inject)
        rows = np.arange(*block.test)
        Xt = X[rows]
        if not np.isfinite(Xt).all():
            raise DataError(f"block {block.index}: non-finite features in the test range",
                            module="backtest", hint="provide at least the feature warm-up before testing")
        preds = fit.model.predict(Xt)
        traces.append(build_signal(raw, rows, preds, pv))
        fits.append(fit)
        importances = dict(fit.model.importances)
    return raw, fits, traces


def run_walk_forward(series: Mapping[str, BarSeries] | BarSeries, cfg: PipelineConfig | None = None, *,
                     schedule: WalkForwardSchedule | None = None, memory: MemoryStore | None = None,
                     inject: str | None = None) -> WalkForwardResult:
    """Run the full pipeline and simulate it over the concatenated test ranges.

    ``inject`` names a deliberate leak (see ``INJECTIONS``) and exists only to
    prove that the gates abort the run.
    """
    cfg = cfg or PipelineConfig()
    if inject is not None and inject not in INJECTIONS:
        raise ParameterError(f"unknown injection {inject!r}", module="backtest")
    if isinstance(series, BarSeries):
        series = {series.symbol: series}
    symbols = sorted(series)
    if cfg.market == "crypto" and len(symbols) != 1:
        raise ParameterError("the crypto pipeline trades exactly one symbol", module="backtest")
    ts = series[symbols[0]].timestamps
    for s in symbols[1:]:
        if not np.array_equal(series[s].timestamps, ts):
            raise DataError("symbols must share one bar grid", module="backtest",
                            hint="align the inputs with the ingest calendar first")
    memory = memory if memory is not None else MemoryStore()
    if schedule is None:
        schedule = build_schedule(ts, cfg.retrain_every, cfg.min_train_window, cfg.horizon, cfg.gap)
    if schedule.is_empty:
        return WalkForwardResult(MetricsReport.empty("no-test-window"), schedule, None, {}, [], [], [], {},
                                 memory)
    step = freq_to_ms(series[symbols[0]].frequency)
    signals, fits = {}, []
    raws = {}
    for i, s in enumerate(symbols):
        raws[s], f, traces = _signals_for_symbol(series[s], cfg, schedule, memory, i, inject)
        fits += f
        signals[s] = SignalTrace.concat(traces)
    contexts = []
    by_index = {b.index: b for b in schedule.blocks}
    for f in fits:
        block = by_index[f.index]
        for c in f.contexts:
            contexts.append((c, _span(ts, block.test, step)))
    start, stop = schedule.blocks[0].test[0], schedule.blocks[-1].test[1]

    if cfg.market == "crypto":
        strategy, engine = _crypto_strategy(symbols[0], raws[symbols[0]], signals[symbols[0]], start, cfg)
        decisions = engine.decisions
    else:
        strategy = _stock_strategy(symbols, signals, start, cfg)
        decisions = []
    sim = simulate(series, strategy, cfg.execution, cfg.capital, start=start, stop=stop)
    bpd = DAY_MS / step if cfg.market == "crypto" else None
    report = compute_metrics(sim.curve, sim.fills, market=cfg.market, final_prices=sim.final_prices,
                             bars_per_day=bpd)
    baselines = {}
    test_ts = ts[start:stop]
    for name in cfg.baselines:
        if name == "buyhold":
            targets = [(start + i, p) for sym in symbols[:1] for i, p in buy_and_hold(sym, test_ts)]
            if len(symbols) > 1:
                w = 1.0 / len(symbols)
                targets = [(start, TargetPortfolio({s: w for s in symbols}, int(ts[start])))]
        else:
            targets = [(start + i, p) for i, p in equal_weight_weekly(symbols, test_ts)]
        b = simulate(series, schedule_strategy(targets), cfg.execution, cfg.capital, start=start, stop=stop)
        baselines[name] = compute_metrics(b.curve, b.fills, market=cfg.market, final_prices=b.final_prices,
                                          bars_per_day=bpd)
    summary = {k: v for k, v in report.to_dict().items() if isinstance(v, (int, float)) or v is None}
    memory.write(MemoryEntry.create("evaluator", "walk-forward/report",
                                    features_hash(np.asarray(sim.curve.equity)), summary,
                                    int(ts[stop - 1]) + step), Namespace.EVAL)
    return WalkForwardResult(report, schedule, sim, signals, fits, decisions, contexts, baselines, memory)


def _crypto_strategy(symbol: str, raw: FeatureFrame, trace: SignalTrace, start: int, cfg: PipelineConfig):
    engine = RiskEngine(cfg.sizing)
    vol_ratio, vol_short = raw["vol_ratio"], raw["vol_short"]
    sent = {"w": 0.0}
    budget = TurnoverBudget(cfg.turnover)

    def strategy(view: MarketView):
        k = view.t - start
        d = engine.step(view.timestamp, float(trace.raw[k]), trace.regimes[k], float(trace.momentum[k]),
                        view.closes[symbol], float(vol_ratio[view.t]), float(vol_short[view.t]), view.equity)
        target = long_flat_target(d.position, symbol, view.timestamp, cfg.position_cap)
        if target.weight(symbol) == sent["w"]:
            return None
        prev = TargetPortfolio({symbol: sent["w"]}, view.timestamp)
        target, _ = enforce_turnover(prev, target, budget)
        sent["w"] = target.weight(symbol)
        return target

    return strategy, engine


def _stock_strategy(symbols: Sequence[str], signals: Mapping[str, SignalTrace], start: int,
                    cfg: PipelineConfig):
    budget = TurnoverBudget(cfg.turnover)
    held = {"p": TargetPortfolio({s: 0.0 for s in symbols})}

    def strategy(view: MarketView):
        k = view.t - start
        if k % cfg.rebalance_every:
            return None
        scores = {s: float(signals[s].raw[k]) for s in symbols}
        proposed = signal_weights(scores, gross=1.0, long_only=True, cap=1.0, as_of=view.timestamp)
        target, _ = enforce_turnover(held["p"], proposed, budget)
        if all(math.isclose(target.weight(s), held["p"].weight(s), abs_tol=1e-15) for s in symbols):
            return None
        held["p"] = target
        return target

    return strategy
