"""tests for reports.py"""

import csv
import json
import math

import pytest

from diagnostics import CSV_COLUMNS, DiagnosticsRecord
from errors import ReportIOError
from reports import (
    CSV_SCHEMA,
    LONG_NAME,
    RECORDS_NAME,
    SUMMARY_NAME,
    Check,
    emit_report,
    read_records_csv,
    summarize,
    validate_records,
    write_long_table,
    write_records_csv,
)


def record(t, **values):
    row = dict.fromkeys(CSV_COLUMNS, 0.0)
    row.update(t=t, u_l2=1.0, u_h1=1.0, psi_L2=0.5, E1=1.0 + t, E2=t)
    row.update(values)
    return DiagnosticsRecord(**row)


@pytest.fixture
def records():
    return [record(0.1 * n, u_h1=1.0 / (1 + n)) for n in range(4)]


def test_single_record_csv(tmp_path):
    path = write_records_csv([record(0.0)], tmp_path / "r.csv")
    lines = path.read_text(encoding="utf-8").splitlines()
    assert len(lines) == 2
    assert lines[0] == ",".join(CSV_COLUMNS)


def test_records_csv_round_trip(tmp_path, records):
    path = write_records_csv(records, tmp_path / RECORDS_NAME)
    assert read_records_csv(path) == records


def test_read_rejects_foreign_header(tmp_path):
    path = tmp_path / "other.csv"
    path.write_text("a,b,c\n1,2,3\n", encoding="utf-8")
    with pytest.raises(ReportIOError):
        read_records_csv(path)
    with pytest.raises(ReportIOError):
        read_records_csv(tmp_path / "missing.csv")


def test_long_table(tmp_path, records):
    records[0].E1_alt = 2.5
    path = write_long_table(records, tmp_path / LONG_NAME)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["schema", "t", "quantity", "value"]
    body = rows[1:]
    assert len(body) == len(records) * len(CSV_COLUMNS)
    assert {r[0] for r in body} == {CSV_SCHEMA}
    alt = [r for r in body if r[2] == "E1_alt"]
    assert len(alt) == len(records)
    assert float(alt[0][3]) == 2.5


def test_validation_passes_clean_stream(records):
    checks = validate_records(records)
    assert [c.name for c in checks] == [
        "norms_finite_nonnegative",
        "energy_functionals_nondecreasing",
        "zero_mass",
        "divergence_free",
    ]
    assert all(c.passed for c in checks)


def test_negative_norm_fails_summary(records):
    records[2] = record(0.2, psi_L2=-1.0)
    checks = validate_records(records)
    summary = summarize("run", records, checks)
    assert summary["status"] == "fail"
    assert "t=0.2" in checks[0].detail


def test_decreasing_energy_and_mass_fail(records):
    records[3] = record(0.3, E1=0.0, mass_max=1e-6, div_max=1e-6)
    failed = {c.name for c in validate_records(records) if not c.passed}
    assert failed == {"energy_functionals_nondecreasing", "zero_mass", "divergence_free"}


def test_empty_stream_fails():
    checks = validate_records([])
    assert [(c.name, c.passed) for c in checks] == [("records_nonempty", False)]
    assert summarize("run", [], checks)["status"] == "fail"


def test_optional_checks_do_not_fail():
    checks = [Check("a", True), Check("b", False, required=False)]
    assert summarize("run", [], checks)["status"] == "pass"


def test_summary_is_json_safe(records):
    summary = summarize("run", records, [], fits={"alpha": math.nan}, extra={"a": 0.25})
    assert summary["fits"]["alpha"] is None
    assert summary["a"] == 0.25
    assert summary["final"]["u_h1"] == pytest.approx(0.25)
    json.dumps(summary)


def test_emit_report_writes_artifacts(tmp_path, records):
    table = (("x", "y"), [(1, 0.5), (2, 0.25)])
    artifacts = emit_report(
        "run", records, tmp_path / "out", ("csv", "json"), checks=validate_records(records),
        tables={"extra.csv": table},
    )
    names = [p.name for p in artifacts.paths]
    assert names == [RECORDS_NAME, LONG_NAME, "extra.csv", SUMMARY_NAME]
    assert artifacts.status == "pass"
    summary = json.loads((tmp_path / "out" / SUMMARY_NAME).read_text(encoding="utf-8"))
    assert summary["n_records"] == len(records)
    assert summary["schema"] == CSV_SCHEMA


def test_emit_report_respects_formats(tmp_path, records):
    artifacts = emit_report("run", records, tmp_path, ("json",))
    assert [p.name for p in artifacts.paths] == [SUMMARY_NAME]


def test_emit_report_lists_written_files_on_failure(tmp_path, records):
    (tmp_path / SUMMARY_NAME).mkdir()
    with pytest.raises(ReportIOError) as info:
        emit_report("run", records, tmp_path, ("csv", "json"))
    written = info.value.written
    assert str(tmp_path / RECORDS_NAME) in written
    assert str(tmp_path / LONG_NAME) in written
    assert all(SUMMARY_NAME not in w for w in written)
