import json
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from agentic_backtest.errors import ImmutabilityError, LeakageError, NamespaceViolation, NotFoundError, ValidationError
from agentic_backtest.memory import (Context, MemoryEntry, MemoryStore, Namespace, canonical_json, check_context,
                                     features_hash, uuid_for, validate_context, verify_store)
from oracles import sha256_reference

EVAL = (1_760_000_000_000, 1_760_086_400_000)


def test_uuid_reference_vector():
    assert uuid_for("alpha", "t1", "{}", "0") == sha256_reference(b"alpha\x1ft1\x1f{}\x1f0")
    assert uuid_for("alpha", "t1", {}, 0) == uuid_for("alpha", "t1", "{}", "0")


def test_uuid_determinism_and_time_sensitivity():
    a = uuid_for("risk", "step", {"b": 1, "a": [1, 2]}, 1_700_000_000_000)
    assert a == uuid_for("risk", "step", '{ "a": [1,2], "b": 1 }', 1_700_000_000_000)
    assert a != uuid_for("risk", "step", {"b": 1, "a": [1, 2]}, 1_700_000_000_001)
    assert len(a) == 64 and a == a.lower()


def test_separator_prevents_concatenation_collisions():
    assert uuid_for("ab", "c", {}, 0) != uuid_for("a", "bc", {}, 0)


@settings(max_examples=50)
@given(st.text(), st.text(), st.dictionaries(st.text(max_size=5), st.integers()), st.integers(0, 2**50))
def test_uuid_pure_function(role, task, params, t):
    assert uuid_for(role, task, params, t) == uuid_for(role, task, dict(reversed(list(params.items()))), t)


def test_canonical_json():
    assert canonical_json({"b": 1, "a": {"d": 2, "c": 3}}) == '{"a":{"c":3,"d":2},"b":1}'


def test_features_hash_sensitive_to_one_value():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(50, 4))
    h = features_hash(x)
    for _ in range(20):
        y = x.copy()
        i, j = rng.integers(50), rng.integers(4)
        y[i, j] += 1e-9
        assert features_hash(y) != h


def _entry(summary=None, ts=1_700_000_000_000, step="fit"):
    return MemoryEntry.create("predictor", step, "f" * 64, summary or {"ic": 0.03, "n": 100}, ts)


def test_write_read_roundtrip(tmp_path):
    store = MemoryStore(tmp_path / "m.jsonl")
    e = _entry()
    assert store.write(e, Namespace.TRAIN)["status"] == "written"
    assert store.read(e.uuid, Namespace.TRAIN) == e
    assert store.write(e, Namespace.TRAIN)["status"] == "exists"
    assert MemoryStore.open(tmp_path / "m.jsonl").read(e.uuid, "train") == e


def test_write_once():
    store = MemoryStore()
    e = _entry()
    store.write(e)
    forged = MemoryEntry(e.uuid, e.agent_role, e.plan_step, e.features_hash, {"ic": 0.5, "n": 100}, e.timestamp)
    with pytest.raises(ImmutabilityError):
        store.write(forged)
    with pytest.raises(ImmutabilityError):
        store.write(e, Namespace.EVAL)


def test_mismatched_uuid_rejected():
    e = _entry()
    bad = MemoryEntry("0" * 64, e.agent_role, e.plan_step, e.features_hash, e.metrics_summary, e.timestamp)
    with pytest.raises(ValidationError):
        MemoryStore().write(bad)


def test_raw_array_rejected():
    with pytest.raises(LeakageError):
        MemoryStore().write(_entry({"returns": list(np.linspace(0, 1, 1000))}))


def test_small_aggregate_allowed():
    MemoryStore().write(_entry({"icBuckets": [0.1] * 16}))


def test_read_errors():
    store = MemoryStore()
    e = _entry()
    store.write(e, Namespace.EVAL)
    with pytest.raises(NamespaceViolation):
        store.read(e.uuid, Namespace.EVAL, requester_mode="train")
    assert store.read(e.uuid, Namespace.EVAL, requester_mode="test") == e
    with pytest.raises(NotFoundError):
        store.read("1" * 64, Namespace.TRAIN)


def test_interleaved_writes_keep_one_version(tmp_path):
    store = MemoryStore(tmp_path / "m.jsonl")
    rng = random.Random(3)
    entries = [_entry({"k": i}, ts=i) for i in range(30)]
    for _ in range(200):
        e = rng.choice(entries)
        store.write(e, Namespace.TRAIN)
        if rng.random() < 0.2:
            with pytest.raises(ImmutabilityError):
                store.write(MemoryEntry(e.uuid, e.agent_role, e.plan_step, e.features_hash, {"k": -1}, e.timestamp))
    rep = verify_store(tmp_path / "m.jsonl")
    assert rep.ok and rep.entries == len(store)


def test_verify_detects_tampering(tmp_path):
    p = tmp_path / "m.jsonl"
    store = MemoryStore(p)
    store.write(_entry())
    lines = p.read_text().splitlines()
    rec = json.loads(lines[1])
    rec["entry"]["metrics_summary"]["ic"] = 0.9
    p.write_text("\n".join(lines + [json.dumps(rec)]) + "\n")
    rep = verify_store(p)
    assert not rep.ok and rep.mismatches


def _ctx(**kw):
    base = dict(task_id="fit/0", agent_role="predictor", run_mode="train",
                time_window=(EVAL[0] - 10 * 86_400_000, EVAL[0]), universe=("BTCUSDT",),
                inputs={"features": "a" * 64}, diagnostics={"ic": 0.02}, objective="minimize validation mse")
    base.update(kw)
    return Context(**base)


def test_clean_context_passes():
    assert validate_context(_ctx(), EVAL) == []
    check_context(_ctx(), EVAL)


def test_eval_timestamp_violation():
    v = validate_context(_ctx(diagnostics={"lastPrice": {str(EVAL[0] + 60_000): 101.2}}), EVAL)
    assert any(x.startswith("eval-timestamp:") for x in v)
    v = validate_context(_ctx(time_window=(EVAL[0] - 1000, EVAL[0] + 1000)), EVAL)
    assert any(x.startswith("eval-timestamp:") for x in v)


def test_objective_violation():
    v = validate_context(_ctx(objective="maximize test sharpe"), EVAL)
    assert any(x.startswith("eval-objective:") for x in v)
    with pytest.raises(LeakageError):
        check_context(_ctx(objective="maximize test sharpe"), EVAL)


def test_inline_array_violation():
    v = validate_context(_ctx(diagnostics={"preds": list(range(17))}), EVAL)
    assert any(x.startswith("inline-array:") for x in v)


def test_run_mode_enforced():
    with pytest.raises(ValidationError):
        _ctx(run_mode="backtest")


def test_context_roundtrip_uuid():
    c = _ctx()
    assert Context.from_dict(json.loads(json.dumps(c.to_dict()))).uuid == c.uuid
