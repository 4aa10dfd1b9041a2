"""In-process orchestrator: agent pools, dispatch with retries, decomposition."""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Sequence

from ..errors import RoutingError, ValidationError
from ..memory import MemoryEntry, MemoryStore, Namespace, canonical_json
from .audit import AuditLog, artifact_set_hash
from .clock import VirtualClock
from .messages import ControlMessage, ControlReply, Status

log = logging.getLogger(__name__)

Handler = Callable[[ControlMessage, "AgentEnv"], Mapping[str, Any]]
# fault hook: (task_id, agent_id, attempt) -> None | "fail" | "crash" | "timeout"
FaultHook = Callable[[str, str, int], "str | None"]


class AgentFailure(Exception):
    """Raised by a handler to report a failed attempt."""


@dataclass
class AgentEnv:
    clock: Any
    orchestrator: "Orchestrator"
    agent_id: str


@dataclass
class Agent:
    agent_id: str
    role: str
    handler: Handler
    duration_ms: int = 0

    def run(self, msg: ControlMessage, env: AgentEnv) -> Mapping[str, Any]:
        return self.handler(msg, env)


@dataclass
class Pool:
    node_type: str
    agents: list[Agent]
    manager: Agent | None = None
    _next: int = 0

    def __post_init__(self):
        if not self.agents and self.manager is None:
            raise ValidationError(f"pool {self.node_type} has no agents")

    def pick(self, exclude: set[str]) -> Agent | None:
        n = len(self.agents)
        for k in range(n):
            a = self.agents[(self._next + k) % n]
            if a.agent_id not in exclude:
                self._next = (self._next + k + 1) % n
                return a
        return None


def result_hash(result: Any) -> str:
    return hashlib.sha256(canonical_json(result).encode()).hexdigest()


@dataclass
class TaskOutcome:
    task_id: str
    replies: list[ControlReply]
    result: Any = None
    attempts: int = 0

    @property
    def status(self) -> Status:
        return self.replies[-1].status

    @property
    def ok(self) -> bool:
        return self.status is Status.DONE


@dataclass
class MergedResult:
    task_id: str
    status: Status
    results: list[Any]
    manifest: list[dict] = field(default_factory=list)

    @property
    def hash(self) -> str:
        return result_hash(self.results)


class Orchestrator:
    """Owns the task table; every message goes through the audit log.

    Handlers return ``{"result": ..., "summary": {...}}``. Each successful
    result is recorded as a memory entry whose uuid is the reply's artifact
    id, and the full result is kept in :attr:`artifacts` under that id.
    """

    def __init__(self, clock=None, memory: MemoryStore | None = None, audit: AuditLog | None = None,
                 faults: FaultHook | None = None, schemas: Mapping[str, Callable[[Any], bool]] | None = None):
        self.clock = clock if clock is not None else VirtualClock()
        self.memory = memory if memory is not None else MemoryStore()
        self.audit = audit if audit is not None else AuditLog()
        self.faults = faults
        self.pools: dict[str, Pool] = {}
        self.schemas: dict[str, Callable[[Any], bool]] = dict(schemas or {})
        self.tasks: dict[str, TaskOutcome] = {}
        self.artifacts: dict[str, Any] = {}
        self.dead: set[str] = set()
        self.attempt_log: list[tuple[str, str, int, str]] = []

    # -------------------------------------------------------------- setup
    def register(self, pool: Pool) -> None:
        self.pools[pool.node_type] = pool

    def register_schema(self, name: str, check: Callable[[Any], bool] = lambda _: True) -> None:
        self.schemas[name] = check

    def mark_dead(self, agent_id: str) -> None:
        if agent_id not in self.dead:
            self.dead.add(agent_id)
            self.audit.append("liveness", {"agentId": agent_id, "event": "dead"}, self.clock.now())

    # -------------------------------------------------------------- core
    def _validate(self, msg: ControlMessage) -> Pool:
        if msg.task_id in self.tasks:
            raise ValidationError(f"taskId {msg.task_id} already used in this run")
        pool = self.pools.get(msg.node_type)
        if pool is None:
            raise RoutingError(f"no pool registered for nodeType {msg.node_type!r}",
                               hint=f"registered: {sorted(self.pools)}")
        for name, schema in msg.declared_inputs:
            if schema not in self.schemas:
                raise ValidationError(f"input {name!r} references unknown schema {schema!r}")
        return pool

    def _emit(self, replies: list[ControlReply], reply: ControlReply) -> None:
        replies.append(reply)
        self.audit.append("reply", reply.to_dict(), self.clock.now())

    def _attempt(self, agent: Agent, msg: ControlMessage, attempt: int):
        fault = self.faults(msg.task_id, agent.agent_id, attempt) if self.faults else None
        self.attempt_log.append((msg.task_id, agent.agent_id, attempt, fault or "ok"))
        self.audit.append("attempt", {"taskId": msg.task_id, "agentId": agent.agent_id, "attempt": attempt,
                                      "fault": fault or "ok"}, self.clock.now())
        if fault == "crash":
            self.mark_dead(agent.agent_id)
            return None, f"agent {agent.agent_id} crashed"
        if fault == "fail":
            return None, f"agent {agent.agent_id} failed"
        if fault == "timeout" or agent.duration_ms > msg.timeout_ms:
            self.clock.advance(msg.timeout_ms)
            return None, f"agent {agent.agent_id} timed out after {msg.timeout_ms} ms"
        try:
            out = agent.run(msg, AgentEnv(self.clock, self, agent.agent_id))
        except AgentFailure as exc:
            return None, f"agent {agent.agent_id} failed: {exc}"
        self.clock.advance(agent.duration_ms)
        return out, None

    def _store(self, agent: Agent, msg: ControlMessage, out: Mapping[str, Any]) -> list[str]:
        result = out.get("result")
        summary = out.get("summary", {})
        ns = Namespace.EVAL if "eval" in msg.policy_flags else Namespace.TRAIN
        entry = MemoryEntry.create(agent.role, msg.task_id, result_hash(result), summary, self.clock.now())
        self.memory.write(entry, ns)
        self.artifacts[entry.uuid] = result
        return [entry.uuid]

    def run_task(self, msg: ControlMessage, candidates: Sequence[Agent] | None = None,
                 manager: Agent | None = None) -> TaskOutcome:
        """Dispatch with at most ``1 + retry_budget`` attempts in total.

        After a failure the task moves to another live agent of the pool, or
        to the pool manager when no peer is left.
        """
        pool = self._validate(msg)
        self.audit.append("control", msg.to_dict(), self.clock.now())
        replies: list[ControlReply] = []
        outcome = TaskOutcome(msg.task_id, replies)
        self.tasks[msg.task_id] = outcome
        self._emit(replies, ControlReply(msg.task_id, True, Status.ACCEPTED))
        order = list(candidates) if candidates is not None else None
        manager = manager or pool.manager
        tried: set[str] = set()
        failures: list[str] = []

        def next_agent() -> Agent | None:
            skip = self.dead | tried
            if order is not None:
                for a in order:
                    if a.agent_id not in skip:
                        return a
            else:
                a = pool.pick(skip)
                if a is not None:
                    return a
            if manager is not None and manager.agent_id not in self.dead:
                return manager
            # every peer tried once: allow live peers again
            live = [a for a in (order or pool.agents) if a.agent_id not in self.dead]
            return live[0] if live else None

        while True:
            agent = next_agent()
            if agent is None:
                failures.append("no live agent available")
                break
            outcome.attempts += 1
            tried.add(agent.agent_id)
            self._emit(replies, ControlReply(msg.task_id, True, Status.RUNNING, agent_id=agent.agent_id,
                                             attempt=outcome.attempts))
            out, err = self._attempt(agent, msg, outcome.attempts)
            if err is None:
                ids = self._store(agent, msg, out)
                outcome.result = out.get("result")
                self._emit(replies, ControlReply(msg.task_id, True, Status.DONE, tuple(failures),
                                                 tuple(ids), agent.agent_id, outcome.attempts))
                return outcome
            failures.append(err)
            log.info("task %s attempt %d: %s", msg.task_id, outcome.attempts, err)
            if outcome.attempts > msg.retry_budget:
                break
        self._emit(replies, ControlReply(msg.task_id, True, Status.FAILED, tuple(failures),
                                         attempt=outcome.attempts))
        return outcome

    def dispatch(self, msg: ControlMessage) -> list[ControlReply]:
        """Reply stream for ``msg``: ack, running per attempt, then one terminal reply."""
        return self.run_task(msg).replies

    def decompose(self, task: ControlMessage, manager: Agent, workers: Sequence[Agent],
                  split: Callable[[ControlMessage], list[ControlMessage]] | None = None) -> MergedResult:
        """Split ``task`` into subtasks, farm them out, merge results by subtask index.

        Subtask ``i`` starts on ``workers[i % n]``; on failure a peer takes
        over, then the manager. A subtask that exhausts its retry budget fails
        the whole task with a manifest of what did complete.
        """
        if not workers:
            raise ValidationError("decompose needs at least one worker")
        self.audit.append("decompose", {"task": task.to_dict(), "manager": manager.agent_id,
                                        "workers": [w.agent_id for w in workers]}, self.clock.now())
        subtasks = (split or default_split)(task)
        results: list[Any] = []
        manifest: list[dict] = []
        status = Status.DONE
        n = len(workers)
        for i, sub in enumerate(subtasks):
            rotation = [workers[(i + k) % n] for k in range(n)]
            out = self.run_task(sub, rotation, manager)
            manifest.append({"index": i, "taskId": sub.task_id, "status": out.status.value,
                             "attempts": out.attempts,
                             "artifactIds": list(out.replies[-1].artifact_ids)})
            if not out.ok:
                status = Status.FAILED
                continue
            results.append(out.result)
        merged = MergedResult(task.task_id, status, results if status is Status.DONE else [], manifest)
        body = {"taskId": task.task_id, "status": status.value, "manifest": manifest}
        if status is Status.DONE:
            body["resultHash"] = merged.hash
        else:
            body["partialResults"] = [result_hash(r) for r in results]
        self.audit.append("merge", body, self.clock.now())
        return merged

    def artifact_hash(self) -> str:
        return artifact_set_hash({k: result_hash(v) for k, v in self.artifacts.items()})


def default_split(task: ControlMessage) -> list[ControlMessage]:
    """One subtask per declared input (the whole task when there are none)."""
    inputs = task.declared_inputs or (("all", "any"),)
    return [ControlMessage(task.node_type, f"{task.task_id}/{i}", (inp,), task.policy_flags,
                           task.timeout_ms, task.retry_budget, {**task.payload, "part": i})
            for i, inp in enumerate(inputs)]


def replay_control_log(records: Sequence[Mapping], build: Callable[[], Orchestrator]) -> str:
    """Re-execute every logged top-level task on a fresh orchestrator.

    ``build`` must return an orchestrator wired with stub agents equivalent to
    the originals (same ids and pools). Injected faults are taken from the
    logged attempt records, so retries and reassignments happen exactly as
    they did originally. Returns the replayed artifact-set hash.
    """
    orch = build()
    logged = {(r["body"]["taskId"], r["body"]["agentId"], r["body"]["attempt"]): r["body"]["fault"]
              for r in records if r["kind"] == "attempt"}
    orch.faults = lambda task, agent, attempt: (None if logged.get((task, agent, attempt), "ok") == "ok"
                                                 else logged[(task, agent, attempt)])
    agents = {a.agent_id: a for p in orch.pools.values() for a in [*p.agents, *([p.manager] if p.manager else [])]}
    decomposed: set[str] = set()
    for rec in records:
        body = rec["body"]
        if rec["kind"] == "decompose":
            task = ControlMessage.from_dict(body["task"])
            decomposed.add(task.task_id)
            orch.decompose(task, agents[body["manager"]], [agents[w] for w in body["workers"]])
        elif rec["kind"] == "control":
            msg = ControlMessage.from_dict(body)
            if msg.task_id.split("/")[0] in decomposed:
                continue
            orch.run_task(msg)
    return orch.artifact_hash()
