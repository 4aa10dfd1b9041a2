"""Rolling walk-forward schedule with purged train/validation/test ranges."""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..errors import DataError, ParameterError

RETRAIN_EVERY = 1440
MIN_TRAIN_WINDOW = 10080
HORIZON = 1
GAP = 2


@dataclass(frozen=True)
class Block:
    """Half-open row ranges ``[start, stop)`` of one retraining block."""

    index: int
    train: tuple[int, int]
    valid: tuple[int, int]
    test: tuple[int, int]

    def to_dict(self, timestamps: np.ndarray | None = None) -> dict:
        d = {"index": self.index, "train": list(self.train), "valid": list(self.valid),
             "test": list(self.test)}
        if timestamps is not None:
            for key, (a, b) in (("train", self.train), ("valid", self.valid), ("test", self.test)):
                d[key + "Ts"] = [int(timestamps[a]), int(timestamps[b - 1])] if b > a else []
        return d


@dataclass(frozen=True)
class WalkForwardSchedule:
    n: int
    retrain_every: int
    min_train_window: int
    horizon: int
    gap: int
    blocks: tuple[Block, ...]
    timestamps: np.ndarray | None = None

    @property
    def purge(self) -> int:
        return self.gap + self.horizon - 1

    @property
    def is_empty(self) -> bool:
        return not self.blocks

    @property
    def eval_range(self) -> tuple[int, int]:
        if not self.blocks:
            return (self.n, self.n)
        return (self.blocks[0].test[0], self.blocks[-1].test[1])

    def violations(self) -> list[str]:
        """Blocks where a train/valid row plus the gap reaches past the first test row."""
        out = []
        for b in self.blocks:
            last = max(b.train[1], b.valid[1]) - 1
            if self.timestamps is not None and len(self.timestamps) == self.n:
                ts = self.timestamps
                step = int(np.min(np.diff(ts))) if self.n > 1 else 0
                if ts[last] + self.gap * step > ts[b.test[0]]:
                    out.append(f"block {b.index}: ts {ts[last]} + gap > {ts[b.test[0]]}")
            elif last + self.gap > b.test[0]:
                out.append(f"block {b.index}: row {last} + {self.gap} > {b.test[0]}")
        return out

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "retrainEvery": self.retrain_every,
            "minTrainWindow": self.min_train_window,
            "horizon": self.horizon,
            "featureLabelGap": self.gap,
            "purge": self.purge,
            "blocks": [b.to_dict(self.timestamps) for b in self.blocks],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def build_schedule(timeline: int | Sequence[int] | np.ndarray, retrain_every: int = RETRAIN_EVERY,
                   min_train_window: int = MIN_TRAIN_WINDOW, horizon: int = HORIZON,
                   gap: int = GAP) -> WalkForwardSchedule:
    """Enumerate retraining blocks over a timeline of ``n`` bars.

    Block ``k`` has boundary ``b = min_train_window + k * retrain_every``. It
    trains on the trailing ``min_train_window`` bars before ``b`` with the last
    ``retrain_every`` of them held out for validation, and tests on
    ``[b, b + retrain_every)``. ``gap + horizon - 1`` rows are purged before the
    validation slice and before the test slice so no label window crosses into
    the next range. The final test block may be shorter than ``retrain_every``.
    """
    if isinstance(timeline, (int, np.integer)):
        n, ts = int(timeline), None
    else:
        ts = np.asarray(timeline, dtype=np.int64)
        n = len(ts)
    if retrain_every < 1 or min_train_window < 1 or horizon < 1:
        raise ParameterError("schedule sizes must be positive", module="predictor")
    if gap < 2:
        raise ParameterError(f"featureLabelGap must be >= 2, got {gap}", module="predictor")
    purge = gap + horizon - 1
    if min_train_window <= retrain_every + purge:
        raise ParameterError("minTrainWindow must exceed retrainEvery plus the purge",
                             module="predictor")
    if n < min_train_window:
        raise DataError(f"timeline has {n} bars; at least minTrainWindow={min_train_window} "
                        f"(and {min_train_window + retrain_every} for one full test block) required",
                        module="predictor")
    blocks = []
    b = min_train_window
    k = 0
    while b < n:
        blocks.append(Block(k, (b - min_train_window, b - retrain_every - purge),
                            (b - retrain_every, b - purge), (b, min(b + retrain_every, n))))
        b += retrain_every
        k += 1
    return WalkForwardSchedule(n, retrain_every, min_train_window, horizon, gap, tuple(blocks), ts)
