"""Virtual and wall clocks (milliseconds)."""
from __future__ import annotations

import heapq
import itertools
import time
from typing import Callable


class VirtualClock:
    """Deterministic clock; time only moves through :meth:`advance` or :meth:`run_until`."""

    def __init__(self, start_ms: int = 0):
        self._now = int(start_ms)
        self._timers: list = []
        self._seq = itertools.count()

    def now(self) -> int:
        return self._now

    def advance(self, ms: int) -> int:
        if ms < 0:
            raise ValueError("cannot move a clock backwards")
        return self.run_until(self._now + int(ms))

    sleep = advance

    def call_at(self, when_ms: int, fn: Callable[[], None]) -> None:
        heapq.heappush(self._timers, (int(when_ms), next(self._seq), fn))

    def run_until(self, when_ms: int) -> int:
        while self._timers and self._timers[0][0] <= when_ms:
            t, _, fn = heapq.heappop(self._timers)
            self._now = max(self._now, t)
            fn()
        self._now = max(self._now, int(when_ms))
        return self._now


class WallClock:
    def now(self) -> int:
        return int(time.time() * 1000)

    def advance(self, ms: int) -> int:
        time.sleep(ms / 1000.0)
        return self.now()

    sleep = advance
