import json
import random
import socket

import numpy as np
import pytest

from agentic_backtest.errors import RoutingError, ValidationError
from agentic_backtest.orchestrator import (Agent, AgentFailure, AuditLog, ControlMessage, Heartbeat, Orchestrator,
                                           PeerBus, PeerMessage, Pool, Status, VirtualClock, decode_frames,
                                           decode_messages, encode_frame, monitor, recv_frame,
                                           replay_control_log, send_frame)
from orch_harness import SYMBOLS, build, square_handler, task


def _echo_orch(faults=None):
    orch = Orchestrator(VirtualClock(), faults=faults)
    orch.register(Pool("echo", [Agent("e0", "echo", lambda m, env: {"result": dict(m.payload), "summary": {}})]))
    return orch


def test_echo_ack_then_done():
    orch = _echo_orch()
    replies = orch.dispatch(ControlMessage("echo", "t1", payload={"x": 1}))
    assert replies[0].ack and replies[0].status is Status.ACCEPTED
    assert replies[-1].status is Status.DONE
    assert len(replies[-1].artifact_ids) == 1
    assert replies[-1].artifact_ids[0] in orch.memory
    assert {r.task_id for r in replies} == {"t1"}
    assert sum(r.status.terminal for r in replies) == 1


def test_fails_twice_then_done():
    orch = _echo_orch(lambda t, a, n: "fail" if n <= 2 else None)
    out = orch.run_task(ControlMessage("echo", "t", retry_budget=2))
    assert out.ok and out.attempts == 3


def test_budget_zero_single_failure():
    orch = _echo_orch(lambda t, a, n: "fail")
    out = orch.run_task(ControlMessage("echo", "t", retry_budget=0))
    assert out.status is Status.FAILED and out.attempts == 1


def test_timeout_budget_zero():
    orch = Orchestrator(VirtualClock())
    orch.register(Pool("slow", [Agent("s", "slow", square_handler, duration_ms=5_000)]))
    out = orch.run_task(ControlMessage("slow", "t", timeout_ms=1_000, retry_budget=0))
    assert out.status is Status.FAILED
    assert "timed out" in out.replies[-1].logs[0]


def test_handler_exception_counts_as_failure():
    calls = []

    def flaky(m, env):
        calls.append(1)
        if len(calls) == 1:
            raise AgentFailure("boom")
        return {"result": 1, "summary": {}}

    orch = Orchestrator(VirtualClock())
    orch.register(Pool("p", [Agent("a", "r", flaky)]))
    assert orch.run_task(ControlMessage("p", "t", retry_budget=1)).ok


def test_unknown_node_type_and_duplicate_ids():
    orch = _echo_orch()
    with pytest.raises(RoutingError):
        orch.dispatch(ControlMessage("nope", "t"))
    orch.dispatch(ControlMessage("echo", "t"))
    with pytest.raises(ValidationError):
        orch.dispatch(ControlMessage("echo", "t"))


def test_unknown_schema_rejected():
    orch = _echo_orch()
    with pytest.raises(ValidationError):
        orch.dispatch(ControlMessage("echo", "t", (("x", "missing/v9"),)))


def test_single_worker_identity():
    orch, mgr, workers = build(n_workers=1)
    merged = orch.decompose(task(symbols=("AAPL",)), mgr, workers[:1])
    assert merged.status is Status.DONE
    assert merged.results == [square_handler(task(symbols=("AAPL",)), None)["result"]]


def test_partition_coverage():
    orch, mgr, workers = build()
    merged = orch.decompose(task(), mgr, workers)
    assert [r["symbol"] for r in merged.results] == list(SYMBOLS)


def test_crash_mid_task_peer_takeover_same_hash():
    orch, mgr, workers = build()
    base = orch.decompose(task(), mgr, workers).hash
    crash = lambda t, a, n: "crash" if t == "universe/1" and n == 1 else None
    orch2, mgr2, workers2 = build(crash)
    merged = orch2.decompose(task(), mgr2, workers2)
    assert merged.status is Status.DONE and merged.hash == base
    assert "w1" in orch2.dead
    assert merged.manifest[1]["attempts"] == 2


def test_failure_beyond_reassignment_reports_manifest():
    orch, mgr, workers = build(lambda t, a, n: "fail" if t == "universe/2" else None)
    merged = orch.decompose(task(budget=2), mgr, workers)
    assert merged.status is Status.FAILED
    assert [m["status"] for m in merged.manifest] == ["done", "done", "failed", "done"]
    assert merged.manifest[2]["attempts"] == 3


def test_retry_bound_random_schedules():
    rng = random.Random(0)
    for k in range(200):
        table = {}
        budget = rng.randint(0, 3)

        def faults(t, a, n, table=table):
            return table.setdefault((t, a, n), rng.choice([None, None, "fail", "crash", "timeout"]))

        orch, mgr, workers = build(faults, n_workers=rng.randint(1, 3))
        orch.decompose(task(f"job{k}", budget), mgr, workers)
        for outcome in orch.tasks.values():
            assert outcome.attempts <= 1 + budget
            assert sum(r.status.terminal for r in outcome.replies) == 1


def test_replay_reproduces_hash(tmp_path):
    crash = lambda t, a, n: "crash" if t == "universe/1" and n == 1 else ("fail" if t == "universe/3" and n == 1 else None)
    orch, mgr, workers = build(crash)
    orch.audit = AuditLog(tmp_path / "audit.jsonl")
    orch.decompose(task(), mgr, workers)
    orch.run_task(ControlMessage("alpha", "solo", (("MSFT", "bars/v1"),)))
    records = AuditLog.read(tmp_path / "audit.jsonl")
    assert replay_control_log(records, lambda: build()[0]) == orch.artifact_hash()


# ---------------------------------------------------------------- peer bus

def test_fifo_same_sender():
    bus = PeerBus(known_context={"c1"})
    bus.register("risk")
    bus.send(PeerMessage("ask", "alpha", "risk", "c1", {"q": 1}))
    bus.send(PeerMessage("tell", "alpha", "risk", "c1", {"a": 2}))
    bus.pump()
    assert [m.kind for m in bus.receive("risk")] == ["ask", "tell"]


def test_unknown_context_and_role():
    bus = PeerBus(known_context={"c1"})
    bus.register("risk")
    with pytest.raises(ValidationError):
        bus.send(PeerMessage("confirm", "alpha", "risk", "nope"))
    r = bus.send(PeerMessage("tell", "alpha", "ghost", "c1"))
    assert not r.delivered and bus.dead_letters
    with pytest.raises(ValidationError):
        PeerMessage("shout", "a", "b", "c1")


def test_interleaved_senders_keep_per_sender_order():
    bus = PeerBus(known_context={"c"})
    bus.register("sink")
    rng = np.random.default_rng(4)
    sent = {s: [] for s in ("a", "b", "c")}
    for i in range(100):
        s = ("a", "b", "c")[int(rng.integers(3))]
        sent[s].append(i)
        bus.send(PeerMessage("tell", "alpha", "sink", "c", {"i": i}, sender_id=s))
    bus.pump(rng)
    got = bus.receive("sink")
    assert len(got) == 100
    for s, order in sent.items():
        assert [m.payload["i"] for m in got if m.sender_id == s] == order
    # every message was stamped and logged for replay
    assert len(bus.audit.of_kind("peer")) == 100


# ---------------------------------------------------------------- liveness

def test_regular_heartbeats_no_dead():
    beats = [Heartbeat("a", i, i * 300) for i in range(50)]
    assert [e for e in monitor(beats, 1_000, until=49 * 300) if e.kind == "dead"] == []


def test_gap_three_timeouts_one_dead_then_late_ignored():
    beats = [Heartbeat("a", 0, 0), Heartbeat("a", 1, 3_000), Heartbeat("a", 2, 3_300)]
    ev = monitor(beats, 1_000)
    assert [(e.kind, e.at) for e in ev if e.kind == "dead"] == [("dead", 1_000)]
    assert sum(e.kind == "late-heartbeat-ignored" for e in ev) == 2


def test_jittered_beats_match_timeline_oracle():
    rng = np.random.default_rng(7)
    timeout = 900
    beats, truth = [], []
    for agent in ("a", "b", "c"):
        t, seq, dead_at = 0, 0, None
        while t < 20_000:
            beats.append(Heartbeat(agent, seq, t))
            gap = int(rng.integers(100, 400)) if rng.random() > 0.03 else int(rng.integers(1_000, 3_000))
            if dead_at is None and gap > timeout:
                dead_at = t + timeout
            t += gap
            seq += 1
        if dead_at is None and t - gap + timeout < 20_000:
            dead_at = t - gap + timeout
        if dead_at is not None:
            truth.append((agent, dead_at))
    ev = monitor(beats, timeout, until=20_000)
    assert sorted((e.agent_id, e.at) for e in ev if e.kind == "dead") == sorted(truth)


# ---------------------------------------------------------------- wire

def test_frames_roundtrip_and_partial():
    msgs = [ControlMessage("echo", "t"), Heartbeat("a", 1, 5), PeerMessage("ask", "x", "y", "c")]
    buf = b"".join(encode_frame(m) for m in msgs)
    assert int.from_bytes(buf[:4], "big") == len(json.dumps(msgs[0].to_dict(), sort_keys=True, separators=(",", ":")))
    decoded, rest = decode_messages(buf[:-3])
    assert decoded == msgs[:2] and len(rest) > 0
    assert decode_messages(buf)[0] == msgs


def test_socket_transport():
    a, b = socket.socketpair()
    try:
        send_frame(a, Heartbeat("z", 3, 9))
        assert recv_frame(b) == Heartbeat("z", 3, 9).to_dict()
    finally:
        a.close()
        b.close()
