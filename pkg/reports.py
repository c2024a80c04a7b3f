# reports.py
#
# Output side of the CLI: records CSV, long-format table, summary JSON, and the
# acceptance checks that decide the exit status.

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from diagnostics import CSV_COLUMNS, NORM_COLUMNS, DiagnosticsRecord
from errors import ReportIOError

log = logging.getLogger(__name__)

CSV_SCHEMA = "fene-records/1"
RECORDS_NAME = "records.csv"
LONG_NAME = "records_long.csv"
SUMMARY_NAME = "summary.json"

MASS_TOL = 1e-10
DIV_TOL = 1e-10

# (header, rows) of an auxiliary CSV
Table = Tuple[Sequence[str], List[Sequence[Any]]]


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""
    required: bool = True


@dataclass
class ReportArtifacts:
    paths: List[Path] = field(default_factory=list)
    summary: Dict[str, Any] = field(default_factory=dict)

    @property
    def status(self) -> str:
        return self.summary.get("status", "pass")


# ---------------------------------------------------------------------------
# Record validation
# ---------------------------------------------------------------------------


def _nondecreasing(values: np.ndarray) -> bool:
    if values.size < 2:
        return True
    slack = 1e-14 * max(1.0, float(np.max(np.abs(values))))
    return bool(np.all(np.diff(values) >= -slack))


def validate_records(records: Sequence[DiagnosticsRecord]) -> List[Check]:
    if not records:
        return [Check("records_nonempty", False, "empty record stream")]

    bad = [r.t for r in records if not (r.is_finite() and r.norms_nonnegative())]
    E1 = np.array([r.E1 for r in records])
    E2 = np.array([r.E2 for r in records])
    mass = max(r.mass_max for r in records)
    div = max(r.div_max for r in records)
    return [
        Check(
            "norms_finite_nonnegative",
            not bad,
            f"{len(bad)} bad records, first at t={bad[0]!r}" if bad else "",
        ),
        Check("energy_functionals_nondecreasing", _nondecreasing(E1) and _nondecreasing(E2)),
        Check("zero_mass", mass <= MASS_TOL, f"max |c0| = {mass:.3e}"),
        Check("divergence_free", div <= DIV_TOL, f"max |xi . u| = {div:.3e}"),
    ]


def overall_status(checks: Iterable[Check]) -> str:
    return "pass" if all(c.passed for c in checks if c.required) else "fail"


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------


def write_records_csv(records: Sequence[DiagnosticsRecord], path: Path) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for rec in records:
            writer.writerow([repr(float(v)) for v in rec.as_row()])
    return path


def read_records_csv(path: Path) -> List[DiagnosticsRecord]:
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if tuple(header or ()) != CSV_COLUMNS:
                raise ReportIOError(f"{path}: unexpected header {header!r}")
            return [DiagnosticsRecord.from_row(row) for row in reader if row]
    except OSError as exc:
        raise ReportIOError(f"cannot read {path}: {exc}") from exc


def write_table(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return path


def write_long_table(records: Sequence[DiagnosticsRecord], path: Path) -> Path:
    """One row per (t, quantity); plot tools consume this directly."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(("schema", "t", "quantity", "value"))
        for rec in records:
            for name in CSV_COLUMNS[1:]:
                writer.writerow((CSV_SCHEMA, repr(rec.t), name, repr(float(getattr(rec, name)))))
            writer.writerow((CSV_SCHEMA, repr(rec.t), "E1_alt", repr(float(rec.E1_alt))))
    return path


# ---------------------------------------------------------------------------
# Summary
# ---------------------------------------------------------------------------


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, Path):
        return str(value)
    return value


def summarize(
    command: str,
    records: Sequence[DiagnosticsRecord],
    checks: Sequence[Check],
    fits: Optional[Dict[str, Any]] = None,
    extra: Optional[Dict[str, Any]] = None,
) -> Dict[str, Any]:
    summary: Dict[str, Any] = {
        "command": command,
        "schema": CSV_SCHEMA,
        "status": overall_status(checks),
        "checks": [asdict(c) for c in checks],
        "fits": fits or {},
        "n_records": len(records),
    }
    if records:
        last = records[-1]
        summary["final"] = {name: getattr(last, name) for name in NORM_COLUMNS}
        summary["final"]["t"] = last.t
        summary["final"]["E1"] = last.E1
        summary["final"]["E1_alt"] = last.E1_alt
        summary["final"]["E2"] = last.E2
        summary["max_du_residual"] = max(r.du_residual for r in records)
    if extra:
        summary.update(extra)
    return _jsonable(summary)


def emit_report(
    command: str,
    records: Sequence[DiagnosticsRecord],
    out_dir: Path,
    formats: Sequence[str] = ("csv", "json"),
    checks: Sequence[Check] = (),
    fits: Optional[Dict[str, Any]] = None,
    extra: Optional[Dict[str, Any]] = None,
    tables: Optional[Dict[str, Table]] = None,
) -> ReportArtifacts:
    """Write the requested artifacts; on I/O failure the error lists what was written."""
    out_dir = Path(out_dir)
    artifacts = ReportArtifacts(summary=summarize(command, records, checks, fits, extra))
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        if "csv" in formats:
            if records:
                artifacts.paths.append(write_records_csv(records, out_dir / RECORDS_NAME))
                artifacts.paths.append(write_long_table(records, out_dir / LONG_NAME))
            for name, (header, rows) in (tables or {}).items():
                artifacts.paths.append(write_table(out_dir / name, header, rows))
        if "json" in formats:
            path = out_dir / SUMMARY_NAME
            with path.open("w", encoding="utf-8") as fh:
                json.dump(artifacts.summary, fh, indent=2, sort_keys=True)
            artifacts.paths.append(path)
    except OSError as exc:
        raise ReportIOError(
            f"report output failed in {out_dir}: {exc}", written=[str(p) for p in artifacts.paths]
        ) from exc

    log.info("[report] %s: %s, %d files in %s", command, artifacts.status, len(artifacts.paths), out_dir)
    return artifacts
