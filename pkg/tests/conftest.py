import json
import os
import sys

import pytest

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
if ROOT not in sys.path:
    sys.path.insert(0, ROOT)

SCENARIOS = os.path.join(ROOT, "scenarios")


@pytest.fixture
def scenario():
    def _path(name):
        return os.path.join(SCENARIOS, name)
    return _path


@pytest.fixture
def ledger(tmp_path, monkeypatch):
    path = str(tmp_path / "runs.db")
    monkeypatch.setenv("ORGUTIL_DB", path)
    return path


BASELINES = os.path.join(ROOT, "tests", "data", "game_baselines.json")


class FrozenValues:
    """Game outputs pinned in tests/data/game_baselines.json.

    A key missing from the file is recorded on the first run (after the calling
    test's oracle checks have passed) and compared on every later run.
    """

    def __init__(self, path):
        self.path = path
        self.dirty = False
        self.values = {}
        if os.path.exists(path):
            with open(path) as f:
                self.values = json.load(f)

    def check(self, key, observed, tol=1e-4):
        if key not in self.values:
            self.values[key] = {k: float(v) for k, v in observed.items()}
            self.dirty = True
            pytest.skip(f"recorded baseline '{key}'")
        for name, expected in self.values[key].items():
            assert observed[name] == pytest.approx(expected, abs=tol), f"{key}.{name}"

    def save(self):
        if self.dirty:
            with open(self.path, "w") as f:
                f.write(json.dumps(self.values, indent=2, sort_keys=True) + "\n")


@pytest.fixture(scope="session")
def frozen():
    values = FrozenValues(BASELINES)
    yield values
    values.save()
