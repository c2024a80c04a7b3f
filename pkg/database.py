import json
import logging
import os
import sqlite3
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional

from diagnostics import CSV_COLUMNS, DiagnosticsRecord

log = logging.getLogger(__name__)

DB_PATH = Path(os.getenv("FENE_DB_PATH", "fene_runs.db"))


def get_connection(path: Optional[Path] = None):
    conn = sqlite3.connect(path or DB_PATH)
    conn.row_factory = sqlite3.Row
    return conn


def init_db(path: Optional[Path] = None):
    conn = get_connection(path)
    cur = conn.cursor()

    # One row per CLI invocation that produced records
    cur.execute("""
        CREATE TABLE IF NOT EXISTS runs (
            id INTEGER PRIMARY KEY AUTOINCREMENT,
            command TEXT NOT NULL,
            seed INTEGER NOT NULL,
            started_at TEXT NOT NULL,
            config_json TEXT NOT NULL,
            status TEXT NOT NULL DEFAULT 'running'
        )
    """)

    # Diagnostics records, same columns as the records CSV
    value_columns = ",\n            ".join(f"{name} REAL NOT NULL" for name in CSV_COLUMNS)
    cur.execute(f"""
        CREATE TABLE IF NOT EXISTS records (
            run_id INTEGER NOT NULL REFERENCES runs(id),
            idx INTEGER NOT NULL,
            {value_columns},
            E1_alt REAL,
            PRIMARY KEY (run_id, idx)
        )
    """)

    # Older archives predate the E1_alt column
    cur.execute("PRAGMA table_info(records)")
    cols = {row["name"] for row in cur.fetchall()}
    if "E1_alt" not in cols:
        cur.execute("ALTER TABLE records ADD COLUMN E1_alt REAL")

    conn.commit()
    conn.close()


def archive_run(
    command: str,
    seed: int,
    config_echo: Dict[str, Any],
    records: List[DiagnosticsRecord],
    status: str,
    path: Optional[Path] = None,
) -> int:
    """Store a finished run and its records; returns the run id."""
    init_db(path)
    placeholders = ", ".join("?" for _ in range(len(CSV_COLUMNS) + 3))
    columns = ", ".join(("run_id", "idx") + CSV_COLUMNS + ("E1_alt",))
    with get_connection(path) as conn:
        cur = conn.cursor()
        cur.execute(
            """
            INSERT INTO runs (command, seed, started_at, config_json, status)
            VALUES (?, ?, ?, ?, ?)
            """,
            (
                command,
                seed,
                datetime.now(timezone.utc).isoformat(),
                json.dumps(config_echo, sort_keys=True),
                status,
            ),
        )
        run_id = cur.lastrowid
        cur.executemany(
            f"INSERT INTO records ({columns}) VALUES ({placeholders})",
            [(run_id, i) + rec.as_row() + (rec.E1_alt,) for i, rec in enumerate(records)],
        )
    log.info("[db] archived run %s (%s, %d records)", run_id, command, len(records))
    return run_id


def load_run_records(run_id: int, path: Optional[Path] = None) -> List[DiagnosticsRecord]:
    with get_connection(path) as conn:
        cur = conn.cursor()
        cur.execute(
            f"SELECT {', '.join(CSV_COLUMNS)}, E1_alt FROM records WHERE run_id = ? ORDER BY idx",
            (run_id,),
        )
        rows = cur.fetchall()
    out = []
    for row in rows:
        rec = DiagnosticsRecord.from_row([row[name] for name in CSV_COLUMNS])
        rec.E1_alt = row["E1_alt"] if row["E1_alt"] is not None else 0.0
        out.append(rec)
    return out


def run_status(run_id: int, path: Optional[Path] = None) -> Optional[str]:
    with get_connection(path) as conn:
        cur = conn.cursor()
        cur.execute("SELECT status FROM runs WHERE id = ?", (run_id,))
        row = cur.fetchone()
    return row["status"] if row else None
