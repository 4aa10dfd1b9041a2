from .engine import (INITIAL_CAPITAL, EquityCurve, ExecutionConfig, Fill, MarketView, SimResult,
                     schedule_strategy, simulate, write_fills)
from .metrics import (PERIODS_PER_YEAR, MetricsReport, Trade, compute_metrics, daily_returns, day_keys,
                      pair_trades)
from .walkforward import INJECTIONS, BlockFit, PipelineConfig, WalkForwardResult, run_walk_forward

__all__ = [
    "INITIAL_CAPITAL", "EquityCurve", "ExecutionConfig", "Fill", "MarketView", "SimResult",
    "schedule_strategy", "simulate", "write_fills", "PERIODS_PER_YEAR", "MetricsReport", "Trade",
    "compute_metrics", "daily_returns", "day_keys", "pair_trades", "INJECTIONS", "BlockFit",
    "PipelineConfig", "WalkForwardResult", "run_walk_forward",
]
