import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from agentic_backtest.ingest import BarSeries  # noqa: E402
from agentic_backtest.synthetic import gen_synthetic  # noqa: E402

MINUTE = 60_000
T0 = 1_753_574_400_000  # 2025-07-27T00:00:00Z, a Sunday


def make_series(close, *, symbol="X", step=MINUTE, start=T0, volume=None, spread=0.0):
    close = np.asarray(close, dtype=float)
    n = len(close)
    open_ = np.r_[close[0], close[:-1]]
    high = np.maximum(open_, close) * (1 + spread)
    low = np.minimum(open_, close) * (1 - spread)
    vol = np.ones(n) if volume is None else np.asarray(volume, dtype=float)
    ts = start + step * np.arange(n, dtype=np.int64)
    return BarSeries(symbol, "1m" if step == MINUTE else "1h", ts, open_, high, low, close, vol)


@pytest.fixture(scope="session")
def walk300():
    return gen_synthetic(seed=3, days=300 / 1440)


@pytest.fixture(scope="session")
def walk2000():
    return gen_synthetic(seed=11, days=2000 / 1440)


@pytest.fixture
def write_csv(tmp_path):
    def _write(rows, name="x.csv", header="timestamp,open,high,low,close,volume"):
        p = tmp_path / name
        p.write_text(header + "\n" + "".join(r + "\n" for r in rows))
        return p
    return _write


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion, whatever the capture mode."""
    rows = {}
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            name = getattr(rep, "nodeid", "")
            if "test_acceptance.py::test_criterion_" not in name or rep.when not in ("call", "setup"):
                continue
            key = name.split("::")[-1]
            if rows.get(key) != "FAIL":
                rows[key] = "PASS" if outcome == "passed" else "FAIL"
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(rows):
        num = int(key.split("_")[2])
        label = " ".join(key.split("_")[3:])
        terminalreporter.write_line(f"criterion {num:2d} {rows[key]}  {label}")
