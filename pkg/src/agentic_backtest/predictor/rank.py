"""Spearman rank information coefficient."""
from __future__ import annotations

import numpy as np
from scipy.stats import rankdata

from ..errors import DataError, ParameterError


class UndefinedCorrelationError(DataError):
    module = "predictor"


def rank_ic(signal, fwd_returns) -> float:
    """Spearman correlation with average ranks for ties.

    A constant input has no defined correlation and raises instead of
    returning 0.
    """
    a = np.asarray(signal, dtype=float)
    b = np.asarray(fwd_returns, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ParameterError("signal and returns must be 1-D of equal length", module="predictor")
    if len(a) < 3:
        raise ParameterError(f"need at least 3 pairs, got {len(a)}", module="predictor")
    if not (np.isfinite(a).all() and np.isfinite(b).all()):
        raise DataError("non-finite values in rank_ic input", module="predictor")
    ra, rb = rankdata(a), rankdata(b)
    if np.ptp(ra) == 0 or np.ptp(rb) == 0:
        raise UndefinedCorrelationError("rank correlation undefined for constant input",
                                        hint="drop constant signals before scoring")
    ra -= ra.mean()
    rb -= rb.mean()
    rho = float(ra @ rb / np.sqrt((ra @ ra) * (rb @ rb)))
    return min(1.0, max(-1.0, rho))
