import sqlite3
import json
import os

from components.utils import BASE_DIR, config_section

DB_FILE = os.path.join(BASE_DIR, config_section("system").get("db_path", "orgutil_runs.db"))
SCHEMA_FILE = os.path.join(BASE_DIR, "components", "schema.sql")

JSON_COLUMNS = ("inputs_json", "outputs_json", "tolerances_json")


class Database:
    """Run ledger: one row per CLI invocation in the run_history table."""

    def __init__(self, db_path=None):
        self.db_path = db_path or os.environ.get("ORGUTIL_DB", DB_FILE)
        self.initialize()

    def get_connection(self):
        conn = sqlite3.connect(self.db_path, timeout=15.0, check_same_thread=False)
        conn.execute("PRAGMA journal_mode=WAL;")
        conn.execute("PRAGMA synchronous=NORMAL;")
        conn.row_factory = sqlite3.Row
        return conn

    def initialize(self):
        if not os.path.exists(SCHEMA_FILE):
            print(f"⚠️ Schema not found: {SCHEMA_FILE}")
            return
        with open(SCHEMA_FILE, 'r') as f:
            schema_script = f.read()
        conn = self.get_connection()
        try:
            conn.executescript(schema_script)
            conn.commit()
        except Exception as e:
            print(f"DB Init Error: {e}")
        finally:
            conn.close()

    def log_run(self, report):
        """Appends a RunReport (or its dict form); returns the row id or None on failure."""
        data = report.to_dict() if hasattr(report, "to_dict") else dict(report)
        conn = self.get_connection()
        try:
            c = conn.cursor()
            c.execute("""
                INSERT INTO run_history (
                    started_at, command, status, exit_code, seed, tool_version,
                    wall_time_sec, inputs_json, outputs_json, tolerances_json, error
                ) VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?)
            """, (
                data['started_at'], data['command'], data['status'], data.get('exit_code', 0),
                data.get('seed'), data.get('tool_version'), data.get('wall_time_sec'),
                json.dumps(data.get('inputs', {}), sort_keys=True),
                json.dumps(data.get('outputs', {}), sort_keys=True),
                json.dumps(data.get('tolerances', {}), sort_keys=True),
                data.get('error'),
            ))
            conn.commit()
            return c.lastrowid
        except Exception as e:
            print(f"Database Error (Log Run): {e}")
            return None
        finally:
            conn.close()

    def fetch_runs(self, limit=20, command=None):
        conn = self.get_connection()
        try:
            c = conn.cursor()
            query = "SELECT * FROM run_history"
            params = []
            if command:
                query += " WHERE command = ?"
                params.append(command)
            query += " ORDER BY id DESC LIMIT ?"
            params.append(limit)
            c.execute(query, params)
            results = []
            for row in c.fetchall():
                d = dict(row)
                for col in JSON_COLUMNS:
                    d[col[:-len("_json")]] = json.loads(d.pop(col) or "{}")
                results.append(d)
            return results
        except Exception as e:
            print(f"DB Error (fetch_runs): {e}")
            return []
        finally:
            conn.close()
