"""Control-plane and peer message types."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any, Mapping

from ..errors import ValidationError

PEER_KINDS = ("ask", "tell", "propose", "confirm")


class Status(str, enum.Enum):
    ACCEPTED = "accepted"
    RUNNING = "running"
    DONE = "done"
    FAILED = "failed"

    @property
    def terminal(self) -> bool:
        return self in (Status.DONE, Status.FAILED)


@dataclass(frozen=True)
class ControlMessage:
    node_type: str
    task_id: str
    declared_inputs: tuple[tuple[str, str], ...] = ()
    policy_flags: frozenset[str] = frozenset()
    timeout_ms: int = 60_000
    retry_budget: int = 2
    payload: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.retry_budget < 0:
            raise ValidationError("retryBudget must be >= 0")
        if self.timeout_ms <= 0:
            raise ValidationError("timeoutMs must be positive")
        if not self.task_id:
            raise ValidationError("taskId must be non-empty")
        object.__setattr__(self, "declared_inputs", tuple((str(n), str(s)) for n, s in self.declared_inputs))
        object.__setattr__(self, "policy_flags", frozenset(self.policy_flags))

    def to_dict(self) -> dict:
        return {"type": "control", "nodeType": self.node_type, "taskId": self.task_id,
                "declaredInputs": [list(x) for x in self.declared_inputs],
                "policyFlags": sorted(self.policy_flags), "timeoutMs": self.timeout_ms,
                "retryBudget": self.retry_budget, "payload": dict(self.payload)}

    @classmethod
    def from_dict(cls, d: Mapping) -> "ControlMessage":
        return cls(d["nodeType"], d["taskId"], tuple(tuple(x) for x in d.get("declaredInputs", ())),
                   frozenset(d.get("policyFlags", ())), int(d.get("timeoutMs", 60_000)),
                   int(d.get("retryBudget", 2)), dict(d.get("payload", {})))


@dataclass(frozen=True)
class ControlReply:
    task_id: str
    ack: bool
    status: Status
    logs: tuple[str, ...] = ()
    artifact_ids: tuple[str, ...] = ()
    agent_id: str = ""
    attempt: int = 0

    def to_dict(self) -> dict:
        return {"type": "reply", "taskId": self.task_id, "ack": self.ack, "status": self.status.value,
                "logs": list(self.logs), "artifactIds": list(self.artifact_ids), "agentId": self.agent_id,
                "attempt": self.attempt}

    @classmethod
    def from_dict(cls, d: Mapping) -> "ControlReply":
        return cls(d["taskId"], bool(d["ack"]), Status(d["status"]), tuple(d.get("logs", ())),
                   tuple(d.get("artifactIds", ())), d.get("agentId", ""), int(d.get("attempt", 0)))


@dataclass(frozen=True)
class PeerMessage:
    kind: str
    from_role: str
    to_role: str
    context_id: str
    payload: Mapping[str, Any] = field(default_factory=dict)
    timestamp: int = 0
    sender_id: str = ""

    def __post_init__(self):
        if self.kind not in PEER_KINDS:
            raise ValidationError(f"peer message kind must be one of {PEER_KINDS}, got {self.kind!r}")

    @property
    def sender(self) -> str:
        return self.sender_id or self.from_role

    def to_dict(self) -> dict:
        return {"type": "peer", "kind": self.kind, "fromRole": self.from_role, "toRole": self.to_role,
                "contextId": self.context_id, "payload": dict(self.payload), "timestamp": self.timestamp,
                "senderId": self.sender_id}

    @classmethod
    def from_dict(cls, d: Mapping) -> "PeerMessage":
        return cls(d["kind"], d["fromRole"], d["toRole"], d["contextId"], dict(d.get("payload", {})),
                   int(d.get("timestamp", 0)), d.get("senderId", ""))


@dataclass(frozen=True)
class Heartbeat:
    agent_id: str
    seq: int
    timestamp: int

    def to_dict(self) -> dict:
        return {"type": "heartbeat", "agentId": self.agent_id, "seq": self.seq, "timestamp": self.timestamp}

    @classmethod
    def from_dict(cls, d: Mapping) -> "Heartbeat":
        return cls(d["agentId"], int(d["seq"]), int(d["timestamp"]))


def message_from_dict(d: Mapping):
    kinds = {"control": ControlMessage, "reply": ControlReply, "peer": PeerMessage, "heartbeat": Heartbeat}
    try:
        return kinds[d["type"]].from_dict(d)
    except KeyError as exc:
        raise ValidationError(f"unknown or malformed message: {exc}") from None
