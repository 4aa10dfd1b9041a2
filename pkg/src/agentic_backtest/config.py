"""Run configuration: JSON/TOML files, bundled presets and flag overrides."""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from datetime import datetime
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

from .backtest import ExecutionConfig, PipelineConfig
from .errors import AgenticError, ConfigError
from .predictor import GbtConfig
from .risk import SizingConfig

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

PRESETS = ("crypto", "stock")
BUNDLED_PREFIX = "bundled:"


def _snake(name: str) -> str:
    return re.sub(r"(?<!^)(?=[A-Z])", "_", name).lower()


def _camel(name: str) -> str:
    head, *rest = name.split("_")
    return head + "".join(p.title() for p in rest)


def parse_time(value: Any) -> int:
    """Epoch milliseconds from an int or an RFC3339 string."""
    if isinstance(value, bool):
        raise ConfigError(f"not a timestamp: {value!r}", module="cli")
    if isinstance(value, (int, float)):
        return int(value)
    s = str(value).strip()
    if s.lstrip("-").isdigit():
        return int(s)
    try:
        dt = datetime.fromisoformat(s.replace("Z", "+00:00"))
    except ValueError:
        raise ConfigError(f"cannot parse timestamp {value!r}", module="cli",
                          hint="use epoch milliseconds or RFC3339 with an offset") from None
    if dt.tzinfo is None:
        raise ConfigError(f"timestamp {value!r} has no UTC offset", module="cli")
    return int(round(dt.timestamp() * 1000))


@dataclass(frozen=True)
class RunConfig:
    market: str = "crypto"
    data_dir: str = "bundled:crypto"
    symbols: tuple[str, ...] = ()
    frequency: str = "1m"
    calendar: str = "24x7"
    eval_window: tuple[int, int] | None = None
    capital: float = 100_000.0
    execution: ExecutionConfig = field(default_factory=ExecutionConfig)
    predictor: str = "gbt"
    gbt: GbtConfig = field(default_factory=GbtConfig)
    ridge_alpha: float = 1.0
    sizing: SizingConfig = field(default_factory=lambda: SizingConfig(deadband_unit=0.05))
    retrain_every: int = 1440
    min_train_window: int = 10080
    horizon: int = 1
    gap: int = 2
    seed: int = 7
    position_cap: float = 0.05
    turnover_limit: float | None = None
    rebalance_every: int = 7
    baselines: tuple[str, ...] = ("buyhold", "equalweight")

    def pipeline(self) -> PipelineConfig:
        return PipelineConfig(
            market=self.market, predictor=self.predictor, gbt=self.gbt, ridge_alpha=self.ridge_alpha,
            sizing=self.sizing, execution=self.execution, capital=self.capital,
            retrain_every=self.retrain_every, min_train_window=self.min_train_window, horizon=self.horizon,
            gap=self.gap, seed=self.seed, position_cap=self.position_cap, turnover_limit=self.turnover_limit,
            rebalance_every=self.rebalance_every, baselines=self.baselines)

    def resolve_data_dir(self) -> Path:
        if self.data_dir.startswith(BUNDLED_PREFIX):
            name = self.data_dir[len(BUNDLED_PREFIX):]
            path = Path(str(resources.files("agentic_backtest") / "data" / name))
        else:
            path = Path(self.data_dir)
        if not path.is_dir():
            raise ConfigError(f"data directory {self.data_dir!r} not found", module="cli",
                              hint="pass --data <dir> with one <SYMBOL>.csv per symbol")
        return path

    # ------------------------------------------------------------ (de)serialization
    def to_dict(self) -> dict:
        """Full effective configuration with every default resolved."""
        return {
            "market": self.market, "dataDir": self.data_dir, "symbols": list(self.symbols),
            "frequency": self.frequency, "calendar": self.calendar,
            "evalWindow": list(self.eval_window) if self.eval_window else None,
            "capital": self.capital, "execution": self.execution.to_dict(),
            "predictor": {"kind": self.predictor, "gbt": self.gbt.to_dict(), "ridgeAlpha": self.ridge_alpha},
            "sizing": {_camel(k): v for k, v in self.sizing.to_dict().items()},
            "schedule": {"retrainEvery": self.retrain_every, "minTrainWindow": self.min_train_window,
                         "horizon": self.horizon, "gap": self.gap},
            "seed": self.seed, "positionCap": self.position_cap, "turnoverLimit": self.turnover_limit,
            "rebalanceEvery": self.rebalance_every, "baselines": list(self.baselines),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "RunConfig":
        d = dict(d)
        known = {"market", "dataDir", "symbols", "frequency", "calendar", "evalWindow", "capital", "execution",
                 "predictor", "sizing", "schedule", "seed", "positionCap", "turnoverLimit", "rebalanceEvery",
                 "baselines", "preset"}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config keys {unknown}", module="cli")
        kw: dict[str, Any] = {}
        try:
            for key in ("market", "dataDir", "frequency", "calendar"):
                if key in d:
                    kw[_snake(key)] = str(d[key])
            if "symbols" in d:
                kw["symbols"] = tuple(str(s) for s in d["symbols"])
            if d.get("evalWindow") is not None:
                ew = d["evalWindow"]
                if not isinstance(ew, (list, tuple)) or len(ew) != 2:
                    raise ConfigError("evalWindow must be [start, end]", module="cli")
                kw["eval_window"] = (parse_time(ew[0]), parse_time(ew[1]))
            if "capital" in d:
                kw["capital"] = float(d["capital"])
            if "execution" in d:
                e = {_snake(k): v for k, v in d["execution"].items()}
                kw["execution"] = ExecutionConfig(**{k: (int(v) if k == "latency" else float(v))
                                                     for k, v in e.items()})
            p = d.get("predictor", {})
            if isinstance(p, str):
                p = {"kind": p}
            if "kind" in p:
                kw["predictor"] = str(p["kind"])
            if "gbt" in p:
                kw["gbt"] = GbtConfig.from_dict({**GbtConfig().to_dict(), **p["gbt"]})
            if "ridgeAlpha" in p:
                kw["ridge_alpha"] = float(p["ridgeAlpha"])
            if "sizing" in d:
                base = SizingConfig(deadband_unit=0.05).to_dict()
                kw["sizing"] = SizingConfig.from_dict({**base, **{_snake(k): v for k, v in d["sizing"].items()}})
            for k, v in d.get("schedule", {}).items():
                kw[_snake(k)] = int(v)
            for key in ("seed", "rebalanceEvery"):
                if key in d:
                    kw[_snake(key)] = int(d[key])
            if "positionCap" in d:
                kw["position_cap"] = float(d["positionCap"])
            if d.get("turnoverLimit") is not None:
                kw["turnover_limit"] = float(d["turnoverLimit"])
            if "baselines" in d:
                kw["baselines"] = tuple(d["baselines"])
            cfg = cls(**kw)
            cfg.pipeline()  # validates market/predictor/baselines
        except AgenticError as exc:
            raise ConfigError(str(exc), module="cli", hint=exc.hint) from exc
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(f"invalid configuration: {exc}", module="cli") from exc
        return cfg


def load_preset(name: str) -> dict:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {PRESETS}", module="cli")
    text = (resources.files("agentic_backtest") / "presets" / f"{name}.json").read_text()
    return json.loads(text)


def read_config_file(path: str | Path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} not found", module="cli")
    try:
        if path.suffix.lower() == ".toml":
            return tomllib.loads(path.read_text())
        return json.loads(path.read_text())
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}", module="cli") from exc


def deep_merge(base: Mapping, over: Mapping) -> dict:
    out = dict(base)
    for k, v in over.items():
        if isinstance(v, Mapping) and isinstance(out.get(k), Mapping):
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = v
    return out


def set_path(d: dict, dotted: str, value: Any) -> dict:
    """Return a copy of ``d`` with ``a.b.c = value``; ``value`` is parsed as JSON when possible."""
    if isinstance(value, str):
        try:
            value = json.loads(value)
        except ValueError:
            pass
    keys = dotted.split(".")
    patch: Any = value
    for k in reversed(keys):
        patch = {k: patch}
    return deep_merge(d, patch)


def load_config(path: str | Path | None = None, *, preset: str | None = None,
                overrides: Mapping[str, Any] | None = None) -> RunConfig:
    """Layer preset, then file, then dotted-key overrides."""
    raw: dict = {}
    file_raw = read_config_file(path) if path is not None else {}
    preset = preset or file_raw.get("preset")
    if preset:
        raw = load_preset(preset)
    raw = deep_merge(raw, {k: v for k, v in file_raw.items() if k != "preset"})
    for k, v in (overrides or {}).items():
        if v is not None:
            raw = set_path(raw, k, v)
    return RunConfig.from_dict(raw)
