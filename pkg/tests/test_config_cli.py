import json
import subprocess
import sys

import pytest

from agentic_backtest.cli import CORE_ARTIFACTS, main
from agentic_backtest.config import RunConfig, load_config, parse_time, set_path
from agentic_backtest.errors import ConfigError

FAST = ["--set", "schedule.minTrainWindow=1200", "--set", "schedule.retrainEvery=300",
        "--set", "predictor.gbt.trees=10", "--set", "predictor.gbt.maxDepth=3"]


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    assert main(["gen-synthetic", "--out", str(d), "--seed", "12", "--days", "1.5"]) == 0
    return d


@pytest.fixture(scope="module")
def run_dir(data_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    assert main(["run", "--data", str(data_dir), "--out", str(out), *FAST]) == 0
    return out


# ---------------------------------------------------------------- config

def test_parse_time():
    assert parse_time("2025-07-27T00:00:00Z") == 1_753_574_400_000
    assert parse_time(1_753_574_400_000) == 1_753_574_400_000
    with pytest.raises(ConfigError):
        parse_time("2025-07-27T00:00:00")


def test_preset_and_overrides():
    cfg = load_config(preset="crypto", overrides={"seed": 11, "predictor.gbt.trees": "50"})
    assert cfg.seed == 11 and cfg.gbt.trees == 50 and cfg.market == "crypto"
    assert cfg.sizing.deadband_unit == 0.05
    stock = load_config(preset="stock")
    assert stock.market == "stock"


def test_toml_file_layering(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text('preset = "crypto"\nseed = 3\n[execution]\nfeeRate = 0.001\n')
    cfg = load_config(p, overrides={"seed": 4})
    assert cfg.seed == 4 and cfg.execution.fee_rate == 0.001 and cfg.execution.slippage == 0.0002


def test_unknown_key_rejected():
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"colour": "blue"})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"predictor": {"kind": "lstm"}})


def test_config_dict_roundtrip():
    cfg = load_config(preset="crypto")
    assert RunConfig.from_dict(cfg.to_dict()) == cfg


def test_set_path():
    assert set_path({"a": {"b": 1}}, "a.c", "2") == {"a": {"b": 1, "c": 2}}


# ---------------------------------------------------------------- cli

def test_run_writes_core_artifacts(run_dir):
    for name in CORE_ARTIFACTS:
        assert (run_dir / name).is_file(), name
    report = json.loads((run_dir / "report.json").read_text())
    assert report["config"]["schedule"]["minTrainWindow"] == 1200
    assert report["config"]["execution"] == {"feeRate": 0.0005, "slippage": 0.0002, "latency": 0}
    assert set(report["baselines"]) == {"buyhold", "equalweight"}


def test_run_is_deterministic(run_dir, data_dir, tmp_path):
    assert main(["run", "--data", str(data_dir), "--out", str(tmp_path), *FAST]) == 0
    assert (tmp_path / "report.json").read_bytes() == (run_dir / "report.json").read_bytes()


def test_memory_verify(run_dir, capsys):
    assert main(["memory", "verify", "--store", str(run_dir / "memory.jsonl")]) == 0
    assert json.loads(capsys.readouterr().out)["ok"]
    assert main(["memory-verify", "--store", str(run_dir / "memory.jsonl"),
                 "--contexts", str(run_dir / "contexts.jsonl")]) == 0


def test_replay(run_dir, capsys):
    assert main(["replay", "--log", str(run_dir / "audit.jsonl")]) == 0
    assert json.loads(capsys.readouterr().out.strip().splitlines()[-1])["status"] == "ok"


def test_eval_window_outside_data_exit_2(data_dir, tmp_path, capsys):
    code = main(["run", "--data", str(data_dir), "--out", str(tmp_path), *FAST,
                 "--eval-window", "2030-01-01T00:00:00Z", "2030-01-02T00:00:00Z"])
    assert code == 2
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["module"] == "cli" and err["hint"]
    assert (tmp_path / "error.json").is_file()


def test_missing_data_dir_exit_2(tmp_path):
    assert main(["run", "--data", str(tmp_path / "nope"), "--out", str(tmp_path / "o")]) == 2


def test_bad_csv_exit_3(tmp_path):
    d = tmp_path / "d"
    d.mkdir()
    (d / "BTCUSDT.csv").write_text("timestamp,open,high,low,close,volume\n1,2,3\n")
    assert main(["run", "--data", str(d), "--out", str(tmp_path / "o")]) == 3


def test_ingest_command(data_dir, tmp_path):
    out = tmp_path / "clean.csv"
    rep = tmp_path / "q.json"
    assert main(["ingest", "--input", str(data_dir / "BTCUSDT.csv"), "--symbol", "BTCUSDT", "--freq", "1m",
                 "--out", str(out), "--report", str(rep)]) == 0
    q = json.loads(rep.read_text())
    assert q["dupTicksRemoved"] == 0 and q["missingPct"] == 0.0 and q["bars"] == 2160


def test_help_lists_flags():
    r = subprocess.run([sys.executable, "-m", "agentic_backtest.cli", "run", "--help"],
                       capture_output=True, text=True, check=True)
    for flag in ("--config", "--preset", "--data", "--out", "--seed", "--eval-window", "--inject-leak"):
        assert flag in r.stdout
