"""JSONL audit log of every message, one per line."""
from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any, Iterable, Mapping


def artifact_set_hash(items: Mapping[str, str] | Iterable[tuple[str, str]]) -> str:
    """Order-independent digest over ``name -> content digest`` pairs."""
    pairs = sorted(items.items() if isinstance(items, Mapping) else items)
    h = hashlib.sha256()
    for name, digest in pairs:
        h.update(f"{name}:{digest}\n".encode())
    return h.hexdigest()


def file_digest(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


class AuditLog:
    """Append-only record list, optionally mirrored to a JSONL file."""

    def __init__(self, path: str | Path | None = None, header: Mapping[str, Any] | None = None):
        self.path = Path(path) if path is not None else None
        self.records: list[dict] = []
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text("")
        if header is not None:
            self.append("header", dict(header), ts=0)

    def append(self, kind: str, body: Mapping[str, Any], ts: int) -> dict:
        rec = {"seq": len(self.records), "ts": int(ts), "kind": kind, "body": body}
        self.records.append(rec)
        if self.path is not None:
            with self.path.open("a") as fh:
                fh.write(json.dumps(rec, sort_keys=True, separators=(",", ":")) + "\n")
        return rec

    def of_kind(self, kind: str) -> list[dict]:
        return [r for r in self.records if r["kind"] == kind]

    @staticmethod
    def read(path: str | Path) -> list[dict]:
        return [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]
