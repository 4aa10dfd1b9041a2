"""Forward-return labels with a feature/label gap."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ParameterError
from ..ingest import BarSeries


@dataclass(frozen=True)
class LabeledSet:
    index: np.ndarray  # feature-row indices that carry a label
    y: np.ndarray

    def __len__(self) -> int:
        return len(self.index)


def build_labels(series: BarSeries | np.ndarray, horizon: int = 1, gap: int = 2) -> LabeledSet:
    """Label row ``t`` with the simple return over ``(t+gap-1, t+gap-1+horizon]``.

    Rows whose label window runs past the end of the series are left out; a
    series too short to label anything yields an empty set.
    """
    if gap < 2:
        raise ParameterError(f"gap must be >= 2, got {gap}", module="predictor")
    if horizon < 1:
        raise ParameterError(f"horizon must be >= 1, got {horizon}", module="predictor")
    close = np.asarray(series.close if isinstance(series, BarSeries) else series, dtype=float)
    start = gap - 1
    m = len(close) - (start + horizon)
    if m <= 0:
        return LabeledSet(np.zeros(0, dtype=np.int64), np.zeros(0))
    y = close[start + horizon:start + horizon + m] / close[start:start + m] - 1.0
    return LabeledSet(np.arange(m, dtype=np.int64), y)
