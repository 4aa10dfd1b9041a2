"""Peer (agent-to-agent) message bus with per-sender FIFO delivery."""
from __future__ import annotations

import logging
from collections import OrderedDict, deque
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from ..errors import ValidationError
from .audit import AuditLog
from .clock import VirtualClock
from .messages import PeerMessage

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Receipt:
    seq: int
    delivered: bool
    reason: str = ""


class PeerBus:
    """Queues messages per sender; :meth:`pump` interleaves senders but never reorders one sender.

    ``known_context`` decides whether a ``contextId`` refers to a stored
    context. Messages to unregistered roles go to :attr:`dead_letters`.
    """

    def __init__(self, clock=None, audit: AuditLog | None = None,
                 known_context: Callable[[str], bool] | Iterable[str] = ()):
        self.clock = clock if clock is not None else VirtualClock()
        self.audit = audit if audit is not None else AuditLog()
        if callable(known_context):
            self._known = known_context
        else:
            ids = set(known_context)
            self._known = ids.__contains__
            self._ids = ids
        self.roles: dict[str, deque] = {}
        self.queues: "OrderedDict[str, deque]" = OrderedDict()
        self.dead_letters: list[dict] = []
        self._seq = 0

    def register(self, role: str) -> None:
        self.roles.setdefault(role, deque())

    def add_context(self, context_id: str) -> None:
        getattr(self, "_ids", set()).add(context_id)

    def send(self, msg: PeerMessage) -> Receipt:
        if not self._known(msg.context_id):
            raise ValidationError(f"{msg.kind} references unknown contextId {msg.context_id!r}")
        ts = self.clock.now()
        stamped = PeerMessage(msg.kind, msg.from_role, msg.to_role, msg.context_id, msg.payload,
                              ts, msg.sender_id)
        seq = self._seq
        self._seq += 1
        if msg.to_role not in self.roles:
            rec = {"seq": seq, "message": stamped.to_dict(), "reason": "unknown role"}
            self.dead_letters.append(rec)
            self.audit.append("dead-letter", rec, ts)
            return Receipt(seq, False, "unknown role")
        self.audit.append("peer", {"seq": seq, **stamped.to_dict()}, ts)
        self.queues.setdefault(stamped.sender, deque()).append((seq, stamped))
        return Receipt(seq, True)

    def pump(self, rng: np.random.Generator | None = None, limit: int | None = None) -> int:
        """Deliver queued messages into role inboxes; senders are interleaved round-robin or by ``rng``."""
        n = 0
        while any(self.queues.values()) and (limit is None or n < limit):
            senders = [s for s, q in self.queues.items() if q]
            s = senders[int(rng.integers(len(senders)))] if rng is not None else senders[0]
            seq, msg = self.queues[s].popleft()
            self.roles[msg.to_role].append((seq, msg))
            if rng is None:
                self.queues.move_to_end(s)
            n += 1
        return n

    def receive(self, role: str) -> list[PeerMessage]:
        box = self.roles.get(role)
        if box is None:
            raise ValidationError(f"role {role!r} not registered")
        out = [m for _, m in box]
        box.clear()
        return out
