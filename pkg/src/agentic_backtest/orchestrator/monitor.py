"""Heartbeat failure detection."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable

from .messages import Heartbeat

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LivenessEvent:
    agent_id: str
    kind: str  # "dead" | "late-heartbeat-ignored" | "stale-seq-ignored"
    at: int


@dataclass
class FailureDetector:
    """Declares an agent dead once it stays silent for longer than ``timeout_ms``.

    Death is final: heartbeats arriving afterwards are logged and ignored.
    """

    timeout_ms: int
    last_seen: dict[str, int] = field(default_factory=dict)
    last_seq: dict[str, int] = field(default_factory=dict)
    dead: dict[str, int] = field(default_factory=dict)
    events: list[LivenessEvent] = field(default_factory=list)

    @property
    def interval_ms(self) -> int:
        return max(1, self.timeout_ms // 3)

    def watch(self, agent_id: str, now: int) -> None:
        self.last_seen.setdefault(agent_id, now)

    def check(self, now: int) -> list[LivenessEvent]:
        """Dead events for agents silent past the timeout as of ``now`` (stamped at expiry)."""
        new = []
        for agent in sorted(self.last_seen, key=lambda a: (self.last_seen[a], a)):
            if agent in self.dead:
                continue
            expiry = self.last_seen[agent] + self.timeout_ms
            if now > expiry:
                self.dead[agent] = expiry
                ev = LivenessEvent(agent, "dead", expiry)
                new.append(ev)
        new.sort(key=lambda e: (e.at, e.agent_id))
        self.events.extend(new)
        return new

    def beat(self, hb: Heartbeat) -> list[LivenessEvent]:
        out = self.check(hb.timestamp)
        if hb.agent_id in self.dead:
            ev = LivenessEvent(hb.agent_id, "late-heartbeat-ignored", hb.timestamp)
            log.info("late heartbeat from dead agent %s at %d ignored", hb.agent_id, hb.timestamp)
            self.events.append(ev)
            return out + [ev]
        if hb.seq <= self.last_seq.get(hb.agent_id, -1):
            ev = LivenessEvent(hb.agent_id, "stale-seq-ignored", hb.timestamp)
            self.events.append(ev)
            return out + [ev]
        self.last_seq[hb.agent_id] = hb.seq
        self.last_seen[hb.agent_id] = hb.timestamp
        return out


def monitor(heartbeats: Iterable[Heartbeat], timeout_ms: int, *, until: int | None = None,
            watch: Iterable[str] = (), start: int = 0) -> list[LivenessEvent]:
    """Replay a heartbeat stream (any order; processed by timestamp) and return liveness events."""
    det = FailureDetector(timeout_ms)
    for a in watch:
        det.watch(a, start)
    beats = sorted(heartbeats, key=lambda h: (h.timestamp, h.agent_id, h.seq))
    for hb in beats:
        det.watch(hb.agent_id, hb.timestamp)
        det.beat(hb)
    if until is not None:
        det.check(until)
    return det.events
