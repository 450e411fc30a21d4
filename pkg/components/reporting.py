"""Run reports and deterministic CSV / JSON writers for command outputs."""
import json
import math
import sys
import time
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone

import numpy as np
import pandas as pd

from components.utils import config_section

TOOL_VERSION = str(config_section("system").get("tool_version", "1.0.0"))
FORMATS = ("csv", "json")


@dataclass
class RunReport:
    command: str
    inputs: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    seed: int = None
    tool_version: str = TOOL_VERSION
    started_at: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat())
    wall_time_sec: float = 0.0
    status: str = "running"
    exit_code: int = 0
    error: str = None
    _t0: float = field(default_factory=time.perf_counter, repr=False)

    def finish(self, status="ok", exit_code=0, error=None):
        self.status = status
        self.exit_code = exit_code
        self.error = error
        self.wall_time_sec = time.perf_counter() - self._t0
        return self

    def to_dict(self):
        data = asdict(self)
        data.pop("_t0")
        return to_plain(data)

    def write_json(self, path):
        with open(path, "w") as f:
            f.write(json.dumps(self.to_dict(), indent=2) + "\n")


def to_plain(value):
    """numpy scalars/arrays to Python, non-finite floats to None."""
    if isinstance(value, dict):
        return {str(k): to_plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_plain(v) for v in value.tolist()]
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def render_json(payload):
    return json.dumps(to_plain(payload), indent=2) + "\n"


def render_csv(rows, columns=None):
    """CSV text; floats keep their shortest round-trip repr."""
    frame = pd.DataFrame(list(rows), columns=columns)
    return frame.to_csv(index=False, lineterminator="\n")


def write_output(text, path=None):
    """Writes to `path`, or to stdout when no path (or '-') is given."""
    if path in (None, "-"):
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    with open(path, "w", newline="") as f:
        f.write(text)


def status(message):
    """Status lines go to stderr so data on stdout stays byte-stable."""
    print(message, file=sys.stderr)


def print_runs(runs):
    status("\n" + "=" * 50)
    status("📊 RUN LEDGER")
    status("=" * 50)
    if not runs:
        status("❌ No runs recorded.")
        return
    for r in runs:
        mark = "✅" if r.get("status") == "ok" else "❌"
        wall = r.get("wall_time_sec") or 0.0
        status(f"{mark} #{r['id']:<5} {r['command']:<8} {r['started_at']}  seed={r.get('seed')}  {wall:.2f}s  exit={r.get('exit_code')}")
        if r.get("error"):
            status(f"      {r['error']}")
    status("=" * 50)
