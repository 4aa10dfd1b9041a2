"""Command-line entry point.

Exit codes: 0 ok, 2 configuration, 3 data, 4 leakage violation, 5 internal.
Every failure prints a JSON error report on stderr (and into ``error.json``
when an output directory is known).
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import sys
import tempfile
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .backtest import INJECTIONS, WalkForwardResult, run_walk_forward, write_fills
from .config import RunConfig, load_config, parse_time
from .errors import AgenticError, ConfigError, DataError, LeakageError
from .ingest import BarSeries, freq_to_ms, ingest_file, load_csv, write_csv
from .memory import MemoryStore, canonical_json, verify_store
from .orchestrator import Agent, AuditLog, ControlMessage, Orchestrator, Pool, VirtualClock, file_digest
from .predictor import build_schedule
from .synthetic import gen_from_spec, write_dataset

log = logging.getLogger("agentic_backtest")

REPORT_FORMAT = "agentic-backtest/report"
AUDIT_FORMAT = "agentic-backtest/audit"
CORE_ARTIFACTS = ("report.json", "equity.csv", "fills.csv", "signals.csv", "audit.jsonl", "memory.jsonl")


def _dump(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


# ------------------------------------------------------------------ data
def load_dataset(cfg: RunConfig) -> dict[str, BarSeries]:
    root = cfg.resolve_data_dir()
    symbols = list(cfg.symbols) or sorted(p.stem for p in root.glob("*.csv"))
    if not symbols:
        raise DataError(f"no CSV files in {root}", module="ingest", hint="expected <SYMBOL>.csv files")
    out = {}
    for sym in symbols:
        path = root / f"{sym}.csv"
        if not path.is_file():
            raise DataError(f"missing data file {path}", module="ingest")
        series, _ = load_csv(path, sym, cfg.frequency, calendar=cfg.calendar)
        if len(series) == 0:
            raise DataError(f"{path} has no bars", module="ingest")
        out[sym] = series
    return out


def make_schedule(cfg: RunConfig, ts: np.ndarray, step: int):
    """Schedule over the data, restricted to the configured evaluation window."""
    if cfg.eval_window is None:
        return build_schedule(ts, cfg.retrain_every, cfg.min_train_window, cfg.horizon, cfg.gap)
    lo, hi = cfg.eval_window
    if not (ts[0] <= lo < hi <= int(ts[-1]) + step):
        raise ConfigError(f"evalWindow {[lo, hi]} lies outside the data span "
                          f"[{int(ts[0])}, {int(ts[-1]) + step})", module="cli",
                          hint="choose a window inside the loaded data")
    a, b = int(np.searchsorted(ts, lo)), int(np.searchsorted(ts, hi))
    if a < cfg.min_train_window:
        raise ConfigError(f"evalWindow starts at bar {a}, before the {cfg.min_train_window}-bar "
                          "minimum training window", module="cli", hint="move the window later")
    full = build_schedule(ts[:b], cfg.retrain_every, cfg.min_train_window, cfg.horizon, cfg.gap)
    blocks = tuple(dataclasses.replace(blk, test=(max(blk.test[0], a), blk.test[1]))
                   for blk in full.blocks if blk.test[1] > a)
    return dataclasses.replace(full, blocks=blocks)


def write_signals(result: WalkForwardResult, path: Path) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp", "symbol", "regime", "quality", "model_weight", "price_action", "raw"])
        for sym, tr in sorted(result.signals.items()):
            for i in range(len(tr)):
                w.writerow([int(tr.timestamps[i]), sym, str(tr.regimes[i]), repr(float(tr.quality[i])),
                            repr(float(tr.model_weight[i])), repr(float(tr.price_action[i])),
                            repr(float(tr.raw[i]))])


# ------------------------------------------------------------------ run
def execute_run(cfg: RunConfig, out: Path, *, inject: str | None = None,
                faults: dict | None = None) -> dict:
    """Run the desk end to end through the orchestrator and write every artifact."""
    out.mkdir(parents=True, exist_ok=True)
    data = load_dataset(cfg)
    digests = {s: hashlib.sha256(canonical_json({"ts": data[s].timestamps.tolist(),
                                                 "c": data[s].close.tolist()}).encode()).hexdigest()
               for s in sorted(data)}
    run_id = hashlib.sha1(canonical_json({"config": cfg.to_dict(), "data": digests}).encode()).hexdigest()[:12]
    (out / "memory.jsonl").unlink(missing_ok=True)  # a run always starts a fresh store
    memory = MemoryStore(out / "memory.jsonl", run_id=run_id)
    audit = AuditLog(out / "audit.jsonl", header={"format": AUDIT_FORMAT, "version": 1, "runId": run_id,
                                                  "config": cfg.to_dict(), "inject": inject})
    fault_hook = None
    if faults:
        fault_hook = lambda t, a, n: None if faults.get((t, a, n), "ok") == "ok" else faults[(t, a, n)]
    orch = Orchestrator(VirtualClock(), memory, audit, fault_hook)
    orch.register_schema("ohlcv")
    holder: dict[str, Any] = {}

    def ingest_handler(msg, env):
        return {"result": {"digests": digests, "bars": {s: len(v) for s, v in data.items()}},
                "summary": {"symbols": len(data), "bars": int(sum(len(v) for v in data.values()))}}

    def desk_handler(msg, env):
        first = data[sorted(data)[0]]
        schedule = make_schedule(cfg, first.timestamps, freq_to_ms(first.frequency))
        res = run_walk_forward(data, cfg.pipeline(), schedule=schedule, memory=env.orchestrator.memory,
                               inject=inject)
        holder["result"] = res
        m = res.report.to_dict()
        return {"result": {"metrics": m}, "summary": {"totalReturn": m["totalReturn"], "sharpe": m["sharpe"],
                                                      "maxDrawdown": m["maxDrawdown"], "nTrades": m["nTrades"]}}

    orch.register(Pool("ingest", [Agent("ingest-1", "data-agent", ingest_handler)]))
    orch.register(Pool("desk", [Agent("desk-1", "desk-agent", desk_handler)]))
    inputs = tuple((s, "ohlcv") for s in sorted(data))
    for msg in (ControlMessage("ingest", "ingest", inputs, retry_budget=1),
                ControlMessage("desk", "walk-forward", inputs, frozenset({"eval"}), timeout_ms=3_600_000,
                               retry_budget=1)):
        outcome = orch.run_task(msg)
        if not outcome.ok:
            raise AgenticError(f"task {msg.task_id} failed: {list(outcome.replies[-1].logs)}", module="orchestrator")

    res: WalkForwardResult = holder["result"]
    if res.sim is not None:
        res.sim.curve.to_csv(out / "equity.csv")
        write_fills(res.sim.fills, out / "fills.csv")
    else:
        (out / "equity.csv").write_text("timestamp,equity\n")
        write_fills([], out / "fills.csv")
    write_signals(res, out / "signals.csv")
    with (out / "risk.jsonl").open("w") as fh:
        for d in res.decisions:
            fh.write(json.dumps(d.to_dict(), sort_keys=True) + "\n")
    with (out / "contexts.jsonl").open("w") as fh:
        for ctx, ew in res.contexts:
            fh.write(json.dumps({"context": ctx.to_dict(), "evalWindow": list(ew)}, sort_keys=True) + "\n")
    (out / "schedule.json").write_text(res.schedule.to_json() + "\n")
    report = res.to_report(cfg.to_dict(), run_id)
    report["format"], report["version"] = REPORT_FORMAT, 1
    report["dataDigests"] = digests
    report["artifacts"] = {name: file_digest(out / name)
                           for name in ("equity.csv", "fills.csv", "signals.csv", "risk.jsonl", "contexts.jsonl",
                                        "schedule.json", "memory.jsonl")}
    report["artifactSetHash"] = orch.artifact_hash()
    (out / "report.json").write_text(_dump(report))
    audit.append("artifacts", {"artifactSetHash": orch.artifact_hash(), "files": report["artifacts"],
                               "report": file_digest(out / "report.json")}, orch.clock.now())
    return report


# ------------------------------------------------------------------ commands
def _run_config(args) -> RunConfig:
    overrides: dict[str, Any] = {}
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}", module="cli")
        k, v = item.split("=", 1)
        overrides[k] = v
    if args.data is not None:
        overrides["dataDir"] = json.dumps(str(args.data))
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.predictor is not None:
        overrides["predictor.kind"] = json.dumps(args.predictor)
    if args.capital is not None:
        overrides["capital"] = args.capital
    for flag, key in (("fee_rate", "execution.feeRate"), ("slippage", "execution.slippage"),
                      ("latency", "execution.latency")):
        if getattr(args, flag) is not None:
            overrides[key] = getattr(args, flag)
    if args.eval_window is not None:
        overrides["evalWindow"] = [parse_time(args.eval_window[0]), parse_time(args.eval_window[1])]
    preset = args.preset if (args.preset or args.config) else "crypto"
    return load_config(args.config, preset=preset, overrides=overrides)


def cmd_run(args) -> int:
    cfg = _run_config(args)
    report = execute_run(cfg, Path(args.out), inject=args.inject_leak)
    print(json.dumps({"status": "ok", "out": str(args.out), "runId": report["runId"],
                      "metrics": {k: report["metrics"][k] for k in ("totalReturn", "sharpe", "maxDrawdown",
                                                                     "nTrades")}}, sort_keys=True))
    return 0


def cmd_ingest(args) -> int:
    series, rep = ingest_file(args.input, args.symbol, args.freq, zmax=args.zmax, window=args.window,
                              calendar=args.calendar, strict=not args.lenient)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_csv(series, args.out)
    body = {"symbol": args.symbol, "frequency": args.freq, "bars": len(series), **rep.to_dict()}
    if args.report:
        Path(args.report).write_text(_dump(body))
    print(json.dumps({"status": "ok", "bars": len(series), "out": str(args.out)}, sort_keys=True))
    return 0


def cmd_replay(args) -> int:
    records = AuditLog.read(args.log)
    if not records or records[0].get("kind") != "header" or "config" not in records[0]["body"]:
        raise DataError(f"{args.log} is not a run audit log", module="orchestrator")
    header = records[0]["body"]
    final = [r for r in records if r["kind"] == "artifacts"]
    if not final:
        raise DataError("audit log has no final artifact record (run did not finish)", module="orchestrator")
    faults = {(r["body"]["taskId"], r["body"]["agentId"], r["body"]["attempt"]): r["body"]["fault"]
              for r in records if r["kind"] == "attempt"}
    cfg = RunConfig.from_dict(header["config"])
    if args.out:
        out = Path(args.out)
        report = execute_run(cfg, out, inject=header.get("inject"), faults=faults)
    else:
        with tempfile.TemporaryDirectory() as tmp:
            report = execute_run(cfg, Path(tmp), inject=header.get("inject"), faults=faults)
    want = final[-1]["body"]["artifactSetHash"]
    got = report["artifactSetHash"]
    same_files = report["artifacts"] == final[-1]["body"]["files"]
    ok = want == got and same_files
    print(json.dumps({"status": "ok" if ok else "mismatch", "recorded": want, "replayed": got,
                      "filesIdentical": same_files, "messages": len(records)}, sort_keys=True))
    return 0 if ok else 5


def cmd_memory_verify(args) -> int:
    rep = verify_store(args.store, args.contexts)
    print(json.dumps(rep.to_dict(), sort_keys=True))
    if rep.leakage:
        return 4
    return 0 if rep.ok else 3


def cmd_gen_synthetic(args) -> int:
    if args.spec:
        spec = json.loads(Path(args.spec).read_text())
    else:
        spec = {"seed": args.seed, "days": args.days, "symbols": args.symbol or ["BTCUSDT"],
                "frequency": args.freq, "calendar": args.calendar}
        if args.vol is not None:
            spec["vol"] = args.vol
    if args.seed is not None and args.spec:
        spec["seed"] = args.seed
    try:
        data = gen_from_spec(spec)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad synthetic spec: {exc}", module="cli") from exc
    paths = write_dataset(data, args.out)
    print(json.dumps({"status": "ok", "files": [str(p) for p in paths]}, sort_keys=True))
    return 0


# ------------------------------------------------------------------ parser
def _add_run_flags(p: argparse.ArgumentParser, *, require_config: bool = False) -> None:
    p.add_argument("--config", required=require_config, help="JSON or TOML run configuration")
    p.add_argument("--preset", choices=("crypto", "stock"), help="start from a bundled preset")
    p.add_argument("--data", help="directory holding one <SYMBOL>.csv per symbol")
    p.add_argument("--out", required=True, help="artifact output directory")
    p.add_argument("--seed", type=int, help="override the random seed")
    p.add_argument("--predictor", choices=("gbt", "ridge"), help="override the model family")
    p.add_argument("--capital", type=float, help="initial capital")
    p.add_argument("--fee-rate", type=float, help="fee as a fraction of traded notional")
    p.add_argument("--slippage", type=float, help="slippage as a fraction of traded notional")
    p.add_argument("--latency", type=int, help="extra bars between decision and fill")
    p.add_argument("--eval-window", nargs=2, metavar=("START", "END"),
                   help="evaluation span, epoch ms or RFC3339; END exclusive")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="dotted config override, e.g. predictor.gbt.trees=100 (repeatable)")
    p.add_argument("--inject-leak", choices=INJECTIONS,
                   help="testing only: plant a deliberate leak to prove the gates abort the run")
    p.set_defaults(func=cmd_run)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="agentic-backtest", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("--log-level", default="WARNING", help="Python logging level (default WARNING)")
    sub = ap.add_subparsers(dest="command", required=True)

    _add_run_flags(sub.add_parser("run", help="run a preset or config end to end"))
    _add_run_flags(sub.add_parser("backtest", help="walk-forward backtest from a config file"),
                   require_config=True)

    p = sub.add_parser("ingest", help="clean and align one OHLCV CSV")
    p.add_argument("--input", required=True, help="raw CSV (timestamp,open,high,low,close,volume)")
    p.add_argument("--symbol", required=True)
    p.add_argument("--freq", required=True, choices=("1m", "1h"))
    p.add_argument("--out", required=True, help="clean CSV path")
    p.add_argument("--report", help="quality report JSON path")
    p.add_argument("--calendar", default=None, help="24x7 (default) or us-equity")
    p.add_argument("--zmax", type=float, default=8.0, help="robust z-score threshold for spikes")
    p.add_argument("--window", type=int, default=1440, help="trailing window for spike detection")
    p.add_argument("--lenient", action="store_true", help="skip unparseable rows instead of failing")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("replay", help="re-execute a run from its audit log and compare artifacts")
    p.add_argument("--log", required=True, help="audit.jsonl written by run/backtest")
    p.add_argument("--out", help="where to write the replayed artifacts (default: temporary)")
    p.set_defaults(func=cmd_replay)

    for name in ("memory-verify",):
        p = sub.add_parser(name, help="recompute memory uuids and rerun the leakage gates")
        p.add_argument("--store", required=True, help="memory.jsonl")
        p.add_argument("--contexts", help="contexts.jsonl to re-check (optional)")
        p.set_defaults(func=cmd_memory_verify)
    p = sub.add_parser("memory", help="memory store tools")
    p.add_argument("action", choices=("verify",))
    p.add_argument("--store", required=True, help="memory.jsonl")
    p.add_argument("--contexts", help="contexts.jsonl to re-check (optional)")
    p.set_defaults(func=cmd_memory_verify)

    p = sub.add_parser("gen-synthetic", help="write a seeded synthetic OHLCV dataset")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--spec", help="JSON spec with seed, days, symbols, frequency, calendar, segments")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--days", type=float, default=20)
    p.add_argument("--symbol", action="append", help="symbol name (repeatable)")
    p.add_argument("--freq", default="1m", choices=("1m", "1h"))
    p.add_argument("--calendar", default="24x7")
    p.add_argument("--vol", type=float, help="per-bar log-return standard deviation")
    p.set_defaults(func=cmd_gen_synthetic)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    if args.command == "gen-synthetic" and args.seed is None and not args.spec:
        args.seed = 7
    try:
        return args.func(args)
    except AgenticError as exc:
        err = exc.to_dict()
    except (OSError, MemoryError) as exc:
        err = {"error": type(exc).__name__, "module": "cli", "message": str(exc),
               "hint": "check paths and permissions", "exitCode": 5}
    except Exception as exc:  # anything unexpected is an internal error
        log.exception("internal error")
        err = {"error": type(exc).__name__, "module": "internal", "message": str(exc),
               "hint": "please report this with the audit log", "exitCode": 5}
    print(json.dumps(err, sort_keys=True), file=sys.stderr)
    out = getattr(args, "out", None)
    if out and args.command in ("run", "backtest"):
        try:
            Path(out).mkdir(parents=True, exist_ok=True)
            (Path(out) / "error.json").write_text(_dump(err))
        except OSError:
            pass
    return int(err["exitCode"])


if __name__ == "__main__":
    sys.exit(main())
