"""UUID-addressed append-only memory, agent contexts and leakage gates.

Entry ids are ``SHA256(role 0x1F task 0x1F params 0x1F time)`` in lowercase
hex. The store is a JSONL file: one header line, then one record per write.
Train and eval entries live in separate namespaces.
"""
from __future__ import annotations

import enum
import hashlib
import json
import logging
import math
import re
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .errors import (ImmutabilityError, LeakageError, NamespaceViolation, NotFoundError, SchemaError,
                     ValidationError)

log = logging.getLogger(__name__)

SEP = b"\x1f"
INLINE_ARRAY_LIMIT = 16
STORE_FORMAT = "agentic-backtest/memory"
STORE_VERSION = 1
RUN_MODES = ("train", "test", "live")

_OBJECTIVE_KEYS = {"objective", "optimization_objective", "optimizationObjective", "target_metric"}
_EVAL_WORDS = re.compile(r"\b(test|eval|evaluation|out[- ]of[- ]sample|oos|holdout|hold-out)\b", re.I)
_METRIC_WORDS = re.compile(r"\b(sharpe|return|returns|pnl|p&l|profit|drawdown|calmar|sortino|"
                           r"win ?rate|accuracy|ic|rank[- ]?ic|hit ?rate|performance)\b", re.I)
_RAW_KEYS = re.compile(r"(price|prices|return_series|returns_series|raw_returns|pnl_path|equity_path|"
                       r"equity_curve|series|close|closes|path)$", re.I)
_TIME_KEYS = re.compile(r"(^|_)(ts|timestamp|time|as_?of|date)$", re.I)


# ------------------------------------------------------------------ hashing
def canonical_json(obj: Any) -> str:
    """Sorted-key minified JSON. A string that parses as JSON is re-canonicalized."""
    if isinstance(obj, (bytes, bytearray)):
        obj = obj.decode("utf-8")
    if isinstance(obj, str):
        try:
            obj = json.loads(obj)
        except ValueError:
            return obj
    return json.dumps(_plain(obj), sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def _plain(obj):
    if isinstance(obj, Mapping):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, enum.Enum):
        return obj.value
    return obj


def _bytes(x) -> bytes:
    if isinstance(x, bytes):
        return x
    return str(x).encode("utf-8")


def uuid_for(role: str, task: str, params: Any, time: int | str) -> str:
    """SHA-256 of ``role 0x1F task 0x1F canonical(params) 0x1F time`` as lowercase hex."""
    pre = SEP.join([_bytes(role), _bytes(task), _bytes(canonical_json(params)), _bytes(time)])
    return hashlib.sha256(pre).hexdigest()


def features_hash(values: np.ndarray | bytes | Iterable[float]) -> str:
    """Non-invertible checksum of an input block (shape and dtype included)."""
    if isinstance(values, bytes):
        return hashlib.sha256(values).hexdigest()
    arr = np.ascontiguousarray(np.asarray(values, dtype=float))
    h = hashlib.sha256()
    h.update(repr(arr.shape).encode())
    h.update(arr.tobytes())
    return h.hexdigest()


# ------------------------------------------------------------------ types
class Namespace(str, enum.Enum):
    TRAIN = "train"
    EVAL = "eval"


@dataclass(frozen=True)
class MemoryEntry:
    uuid: str
    agent_role: str
    plan_step: str
    features_hash: str
    metrics_summary: Mapping[str, Any]
    timestamp: int

    @staticmethod
    def compute_uuid(agent_role: str, plan_step: str, features_hash: str,
                     metrics_summary: Mapping[str, Any], timestamp: int) -> str:
        params = {"features_hash": features_hash, "metrics_summary": metrics_summary}
        return uuid_for(agent_role, plan_step, params, int(timestamp))

    @classmethod
    def create(cls, agent_role: str, plan_step: str, features_hash: str,
               metrics_summary: Mapping[str, Any], timestamp: int) -> "MemoryEntry":
        summary = json.loads(canonical_json(metrics_summary))
        return cls(cls.compute_uuid(agent_role, plan_step, features_hash, summary, timestamp),
                   agent_role, plan_step, features_hash, summary, int(timestamp))

    def to_dict(self) -> dict:
        return {"uuid": self.uuid, "agent_role": self.agent_role, "plan_step": self.plan_step,
                "features_hash": self.features_hash, "metrics_summary": _plain(self.metrics_summary),
                "timestamp": self.timestamp}

    @classmethod
    def from_dict(cls, d: Mapping) -> "MemoryEntry":
        try:
            return cls(d["uuid"], d["agent_role"], d["plan_step"], d["features_hash"],
                       d["metrics_summary"], int(d["timestamp"]))
        except KeyError as exc:
            raise SchemaError(f"memory entry lacks field {exc}", module="memory") from None

    def canonical(self) -> str:
        return canonical_json(self.to_dict())

    def recomputed_uuid(self) -> str:
        return self.compute_uuid(self.agent_role, self.plan_step, self.features_hash,
                                 self.metrics_summary, self.timestamp)


@dataclass(frozen=True)
class Context:
    """What an agent is allowed to see for one task.

    ``time_window`` is the ``[start, end)`` millisecond span of data visible to
    the agent. Numerical arrays travel only as artifact ids in ``inputs`` and
    ``tool_outputs``.
    """

    task_id: str
    agent_role: str
    run_mode: str
    time_window: tuple[int, int]
    universe: tuple[str, ...] = ()
    inputs: Mapping[str, str] = field(default_factory=dict)
    tool_outputs: Mapping[str, str] = field(default_factory=dict)
    diagnostics: Mapping[str, Any] = field(default_factory=dict)
    objective: str = ""

    def __post_init__(self):
        if self.run_mode not in RUN_MODES:
            raise ValidationError(f"run_mode must be one of {RUN_MODES}, got {self.run_mode!r}",
                                  module="memory")

    def body(self) -> dict:
        return {"task_id": self.task_id, "agent_role": self.agent_role, "run_mode": self.run_mode,
                "time_window": list(self.time_window), "universe": list(self.universe),
                "inputs": dict(self.inputs), "tool_outputs": dict(self.tool_outputs),
                "diagnostics": _plain(self.diagnostics), "objective": self.objective}

    @property
    def uuid(self) -> str:
        return uuid_for(self.agent_role, self.task_id, self.body(), int(self.time_window[1]))

    def to_dict(self) -> dict:
        return {**self.body(), "uuid": self.uuid}

    @classmethod
    def from_dict(cls, d: Mapping) -> "Context":
        return cls(d["task_id"], d["agent_role"], d["run_mode"], tuple(d["time_window"]),
                   tuple(d.get("universe", ())), dict(d.get("inputs", {})),
                   dict(d.get("tool_outputs", {})), dict(d.get("diagnostics", {})),
                   d.get("objective", ""))


# ------------------------------------------------------------------ gates
def _as_timestamp(x) -> int | None:
    if isinstance(x, bool):
        return None
    if isinstance(x, (int, np.integer)) and 10**11 <= int(x) < 10**14:
        return int(x)
    if isinstance(x, str):
        s = x.strip()
        if s.isdigit() and 10**11 <= int(s) < 10**14:
            return int(s)
        if re.match(r"^\d{4}-\d{2}-\d{2}[T ]\d{2}:\d{2}", s):
            try:
                dt = datetime.fromisoformat(s.replace("Z", "+00:00"))
            except ValueError:
                return None
            if dt.tzinfo is None:
                return None
            return int(dt.timestamp() * 1000)
    return None


def _walk(obj, path="$"):
    yield path, None, obj
    if isinstance(obj, Mapping):
        for k, v in obj.items():
            yield path, k, None
            yield from _walk(v, f"{path}.{k}")
    elif isinstance(obj, (list, tuple, np.ndarray)):
        for i, v in enumerate(obj):
            if isinstance(v, (Mapping, list, tuple, np.ndarray)):
                yield from _walk(v, f"{path}[{i}]")


def _numeric_count(seq) -> int:
    return sum(1 for v in seq if isinstance(v, (int, float, np.number)) and not isinstance(v, bool))


def inline_array_violations(obj, limit: int = INLINE_ARRAY_LIMIT, root: str = "$") -> list[str]:
    out = []
    for path, key, node in _walk(obj, root):
        if key is None and isinstance(node, (list, tuple, np.ndarray)):
            flat = np.asarray(node, dtype=object).ravel() if not isinstance(node, np.ndarray) else node.ravel()
            if _numeric_count(flat) > limit:
                out.append(f"inline-array: {path} holds {len(flat)} numbers (limit {limit})")
        elif key is None and isinstance(node, Mapping):
            numeric_vals = _numeric_count(node.values())
            if numeric_vals > limit and sum(_as_timestamp(k) is not None for k in node) > limit:
                out.append(f"inline-array: {path} is a timestamp-keyed series of {numeric_vals} values")
    return out


def objective_violations(obj, root: str = "$") -> list[str]:
    out = []
    for path, key, node in _walk(obj, root):
        if key is None and isinstance(node, Mapping):
            for k, v in node.items():
                if k in _OBJECTIVE_KEYS and isinstance(v, str) and _EVAL_WORDS.search(v) \
                        and _METRIC_WORDS.search(v):
                    out.append(f"eval-objective: {path}.{k} = {v!r}")
    return out


def timestamp_violations(obj, window: tuple[int, int], root: str = "$") -> list[str]:
    lo, hi = window
    out = []
    for path, key, node in _walk(obj, root):
        if key is not None:
            t = _as_timestamp(key)
            if t is not None and lo <= t < hi:
                out.append(f"eval-timestamp: key {key!r} at {path} lies in the evaluation window")
        elif isinstance(node, Mapping):
            for k, v in node.items():
                if _TIME_KEYS.search(str(k)):
                    t = _as_timestamp(v)
                    if t is not None and lo <= t < hi:
                        out.append(f"eval-timestamp: {path}.{k} = {v} lies in the evaluation window")
    return out


def validate_context(ctx: Context | Mapping, eval_window: tuple[int, int] | None) -> list[str]:
    """Leakage violations for ``ctx``; an empty list means the context passes."""
    if isinstance(ctx, Context):
        body, mode, tw = ctx.body(), ctx.run_mode, ctx.time_window
    else:
        body, mode, tw = dict(ctx), ctx.get("run_mode"), tuple(ctx.get("time_window", (0, 0)))
        body.pop("uuid", None)
    out = []
    if mode not in RUN_MODES:
        out.append(f"run-mode: {mode!r} not in {RUN_MODES}")
    payload = {k: body.get(k) for k in ("diagnostics", "inputs", "tool_outputs", "universe", "objective")}
    out += inline_array_violations(payload)
    out += objective_violations(body)
    if eval_window is not None and mode in ("train", "live"):
        lo, hi = eval_window
        if tw and len(tw) == 2 and tw[0] < hi and lo < tw[1]:
            out.append(f"eval-timestamp: time_window {list(tw)} overlaps the evaluation window {[lo, hi]}")
        out += timestamp_violations(payload, eval_window)
    return out


def validate_entry(entry: MemoryEntry) -> list[str]:
    """Raw-series checks on a memory entry's metrics summary."""
    s = entry.metrics_summary
    out = inline_array_violations(s, root="$.metrics_summary")
    for path, key, node in _walk(s, "$.metrics_summary"):
        if key is None and isinstance(node, Mapping):
            for k, v in node.items():
                if _RAW_KEYS.search(str(k)) and isinstance(v, (list, tuple, Mapping)) and len(v) > 1:
                    out.append(f"raw-series: {path}.{k} stores a per-timestamp series")
    ts_keys = [(path, key) for path, key, _ in _walk(s, "$.metrics_summary")
               if key is not None and _as_timestamp(key) is not None]
    if ts_keys:
        out.append(f"raw-series: {len(ts_keys)} per-timestamp keys in metrics_summary "
                   f"(first {ts_keys[0][1]!r} at {ts_keys[0][0]})")
    out += objective_violations(s, "$.metrics_summary")
    return out


def check_context(ctx: Context, eval_window: tuple[int, int] | None) -> Context:
    v = validate_context(ctx, eval_window)
    if v:
        raise LeakageError(f"context {ctx.task_id} ({ctx.agent_role}) failed the leakage gate: {v[0]}",
                           violations=v, hint="pass arrays by artifact id; keep eval data out of train contexts")
    return ctx


# ------------------------------------------------------------------ store
class MemoryStore:
    """Append-only, write-once memory with separate train/eval namespaces.

    With ``path`` set, every write is appended to a JSONL log that can rebuild
    the index (:meth:`open`).
    """

    def __init__(self, path: str | Path | None = None, *, run_id: str = ""):
        self.path = Path(path) if path is not None else None
        self._index: dict[str, tuple[Namespace, str]] = {}
        self._order: list[str] = []
        self.header = {"format": STORE_FORMAT, "version": STORE_VERSION, "timeGranularity": "epoch-ms",
                       "separator": "0x1F", "params": "sorted-key minified JSON", "runId": run_id}
        if self.path is not None and not self.path.exists():
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text(json.dumps(self.header, sort_keys=True) + "\n")

    @classmethod
    def open(cls, path: str | Path) -> "MemoryStore":
        path = Path(path)
        store = cls.__new__(cls)
        store.path = path
        store._index, store._order = {}, []
        lines = path.read_text().splitlines()
        if not lines:
            raise SchemaError(f"{path}: empty store", module="memory")
        store.header = json.loads(lines[0])
        if store.header.get("format") != STORE_FORMAT:
            raise SchemaError(f"{path}: not a memory store", module="memory")
        for line in lines[1:]:
            rec = json.loads(line)
            entry = MemoryEntry.from_dict(rec["entry"])
            store._index[entry.uuid] = (Namespace(rec["ns"]), entry.canonical())
            store._order.append(entry.uuid)
        return store

    def __len__(self) -> int:
        return len(self._index)

    def __contains__(self, uuid: str) -> bool:
        return uuid in self._index

    def write(self, entry: MemoryEntry, ns: Namespace | str = Namespace.TRAIN) -> dict:
        ns = Namespace(ns)
        violations = validate_entry(entry)
        if violations:
            raise LeakageError(f"memory entry {entry.uuid[:12]} rejected: {violations[0]}",
                               violations=violations, hint="store aggregates only")
        data = entry.canonical()
        if entry.uuid in self._index:
            old_ns, old = self._index[entry.uuid]
            if old == data and old_ns == ns:
                return {"uuid": entry.uuid, "ns": ns.value, "status": "exists"}
            raise ImmutabilityError(f"uuid {entry.uuid} is already written with different content"
                                    if old != data else f"uuid {entry.uuid} belongs to namespace {old_ns.value}")
        if entry.recomputed_uuid() != entry.uuid:
            raise ValidationError(f"uuid {entry.uuid[:12]} does not match the entry content", module="memory")
        self._index[entry.uuid] = (ns, data)
        self._order.append(entry.uuid)
        if self.path is not None:
            with self.path.open("a") as fh:
                fh.write(json.dumps({"ns": ns.value, "entry": json.loads(data)}, sort_keys=True,
                                    separators=(",", ":")) + "\n")
        return {"uuid": entry.uuid, "ns": ns.value, "status": "written"}

    def read(self, uuid: str, ns: Namespace | str, requester_mode: str = "test") -> MemoryEntry:
        ns = Namespace(ns)
        if requester_mode == "train" and ns is Namespace.EVAL:
            raise NamespaceViolation("train-mode requester may not read the eval namespace",
                                     violations=[f"cross-namespace read of {uuid}"])
        if uuid not in self._index or self._index[uuid][0] is not ns:
            raise NotFoundError(f"uuid {uuid} not found in namespace {ns.value}")
        return MemoryEntry.from_dict(json.loads(self._index[uuid][1]))

    def entries(self) -> list[tuple[Namespace, MemoryEntry]]:
        return [(self._index[u][0], MemoryEntry.from_dict(json.loads(self._index[u][1]))) for u in self._order]


@dataclass
class VerifyReport:
    path: str
    entries: int = 0
    mismatches: list[str] = field(default_factory=list)
    conflicts: list[str] = field(default_factory=list)
    leakage: list[str] = field(default_factory=list)
    errors: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not (self.mismatches or self.conflicts or self.leakage or self.errors)

    def to_dict(self) -> dict:
        return {"path": self.path, "ok": self.ok, "entries": self.entries, "mismatches": self.mismatches,
                "conflicts": self.conflicts, "leakage": self.leakage, "errors": self.errors}


def verify_store(path: str | Path, contexts: str | Path | None = None,
                 eval_window: tuple[int, int] | None = None) -> VerifyReport:
    """Recompute every uuid, detect rewrites, and rerun the leakage gates."""
    path = Path(path)
    rep = VerifyReport(str(path))
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        rep.errors.append(f"cannot read store: {exc}")
        return rep
    if not lines:
        rep.errors.append("empty store file")
        return rep
    try:
        header = json.loads(lines[0])
        if header.get("format") != STORE_FORMAT:
            rep.errors.append("missing or foreign header")
    except ValueError:
        rep.errors.append("header is not JSON")
    seen: dict[str, str] = {}
    for i, line in enumerate(lines[1:], start=2):
        try:
            rec = json.loads(line)
            entry = MemoryEntry.from_dict(rec["entry"])
            Namespace(rec["ns"])
        except (ValueError, KeyError, SchemaError) as exc:
            rep.errors.append(f"line {i}: unreadable record ({exc})")
            continue
        rep.entries += 1
        if entry.recomputed_uuid() != entry.uuid:
            rep.mismatches.append(f"line {i}: uuid {entry.uuid[:16]} does not match its content")
        data = entry.canonical() + rec["ns"]
        if entry.uuid in seen and seen[entry.uuid] != data:
            rep.conflicts.append(f"line {i}: uuid {entry.uuid[:16]} rewritten with different content")
        seen.setdefault(entry.uuid, data)
        rep.leakage += [f"line {i}: {v}" for v in validate_entry(entry)]
    if contexts is not None and Path(contexts).exists():
        for i, line in enumerate(Path(contexts).read_text().splitlines(), start=1):
            rec = json.loads(line)
            ew = tuple(rec["evalWindow"]) if rec.get("evalWindow") else eval_window
            ctx = rec["context"]
            try:
                c = Context.from_dict(ctx)
            except ValidationError as exc:
                rep.leakage.append(f"context line {i}: {exc}")
                continue
            if c.uuid != ctx.get("uuid"):
                rep.mismatches.append(f"context line {i}: uuid does not match content")
            rep.leakage += [f"context line {i}: {v}" for v in validate_context(c, ew)]
    return rep
