from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np
import pandas as pd

from ..errors import SchemaError

FAMILIES = ("price", "indicator", "momentum", "volatility", "meanrev", "volume", "structure")


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    family: str
    lookback: int
    definition: str = "standard"
    description: str = ""

    def __post_init__(self):
        if self.lookback < 1:
            raise ValueError(f"{self.name}: lookback must be >= 1")
        if self.family not in FAMILIES:
            raise ValueError(f"{self.name}: unknown family {self.family!r}")

    def to_dict(self) -> dict:
        return {"name": self.name, "family": self.family, "lookback": self.lookback,
                "definition": self.definition, "description": self.description}


@dataclass(frozen=True, eq=False)
class FeatureFrame:
    """Per-timestamp feature matrix. Rows share the bar grid; values are read-only."""

    timestamps: np.ndarray
    columns: tuple[str, ...]
    values: np.ndarray
    valid_from: dict[str, int] = field(default_factory=dict)
    specs: tuple[FeatureSpec, ...] = ()

    def __post_init__(self):
        ts = np.array(self.timestamps, dtype=np.int64)
        vals = np.array(self.values, dtype=np.float64).reshape(len(ts), len(self.columns))
        ts.setflags(write=False)
        vals.setflags(write=False)
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "columns", tuple(self.columns))
        if len(set(self.columns)) != len(self.columns):
            raise ValueError("duplicate column names")
        object.__setattr__(self, "_index", {c: i for i, c in enumerate(self.columns)})

    def __len__(self) -> int:
        return len(self.timestamps)

    def __contains__(self, name: str) -> bool:
        return name in self._index

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self.values[:, self._index[name]]
        except KeyError:
            raise SchemaError(f"missing feature column {name!r}", module="features") from None

    def select(self, names: Iterable[str]) -> "FeatureFrame":
        names = list(names)
        missing = [n for n in names if n not in self._index]
        if missing:
            raise SchemaError(f"missing feature columns {missing}", module="features")
        idx = [self._index[n] for n in names]
        spec_map = {s.name: s for s in self.specs}
        return FeatureFrame(self.timestamps, tuple(names), self.values[:, idx],
                            {n: self.valid_from[n] for n in names if n in self.valid_from},
                            tuple(spec_map[n] for n in names if n in spec_map))

    def rows(self, idx) -> "FeatureFrame":
        return FeatureFrame(self.timestamps[idx], self.columns, self.values[idx],
                            dict(self.valid_from), self.specs)

    def with_values(self, values: np.ndarray, columns: tuple[str, ...] | None = None) -> "FeatureFrame":
        cols = self.columns if columns is None else columns
        return FeatureFrame(self.timestamps, cols, values,
                            {c: self.valid_from[c] for c in cols if c in self.valid_from},
                            tuple(s for s in self.specs if s.name in set(cols)))

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame(self.values, columns=list(self.columns))
        df.insert(0, "timestamp", self.timestamps)
        return df

    def to_csv(self, path: str | Path) -> None:
        path = Path(path)
        self.to_frame().to_csv(path, index=False, float_format="%.17g")
        schema = {
            "columns": [s.to_dict() | {"validFrom": self.valid_from.get(s.name)} for s in self.specs],
        }
        path.with_suffix(".schema.json").write_text(json.dumps(schema, indent=2, sort_keys=True))

    @classmethod
    def read_csv(cls, path: str | Path) -> "FeatureFrame":
        path = Path(path)
        df = pd.read_csv(path, float_precision="round_trip")
        schema_path = path.with_suffix(".schema.json")
        specs, valid = (), {}
        if schema_path.exists():
            cols = json.loads(schema_path.read_text())["columns"]
            specs = tuple(FeatureSpec(c["name"], c["family"], c["lookback"], c["definition"],
                                      c.get("description", "")) for c in cols)
            valid = {c["name"]: c["validFrom"] for c in cols if c.get("validFrom") is not None}
        names = tuple(c for c in df.columns if c != "timestamp")
        return cls(df["timestamp"].to_numpy(), names, df[list(names)].to_numpy(), valid, specs)
