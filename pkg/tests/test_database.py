import sqlite3

from components.database import Database
from components.reporting import RunReport


def _report(command="derive", status="ok", exit_code=0, error=None):
    report = RunReport(command=command, inputs={"input": "scenarios/unanimity.json"}, seed=7)
    report.outputs = {"rows": 3}
    report.tolerances = {"ce": 1e-9}
    return report.finish(status, exit_code, error)


class TestRunLedger:
    def test_schema_created(self, tmp_path):
        path = str(tmp_path / "runs.db")
        Database(path)
        conn = sqlite3.connect(path)
        tables = {r[0] for r in conn.execute("SELECT name FROM sqlite_master WHERE type='table'")}
        conn.close()
        assert "run_history" in tables

    def test_log_and_fetch(self, tmp_path):
        db = Database(str(tmp_path / "runs.db"))
        row_id = db.log_run(_report())
        assert row_id == 1
        runs = db.fetch_runs()
        assert len(runs) == 1
        run = runs[0]
        assert run["command"] == "derive"
        assert run["seed"] == 7
        assert run["inputs"] == {"input": "scenarios/unanimity.json"}
        assert run["outputs"] == {"rows": 3}
        assert run["tolerances"] == {"ce": 1e-9}
        assert run["wall_time_sec"] >= 0.0

    def test_newest_first_and_filter(self, tmp_path):
        db = Database(str(tmp_path / "runs.db"))
        db.log_run(_report("derive"))
        db.log_run(_report("risk", "error", 3, "DegenerateProbability: saturated"))
        db.log_run(_report("games"))
        assert [r["command"] for r in db.fetch_runs()] == ["games", "risk", "derive"]
        failed = db.fetch_runs(command="risk")
        assert len(failed) == 1
        assert failed[0]["exit_code"] == 3
        assert failed[0]["error"].startswith("DegenerateProbability")
        assert len(db.fetch_runs(limit=2)) == 2

    def test_env_override(self, ledger):
        db = Database()
        assert db.db_path == ledger
