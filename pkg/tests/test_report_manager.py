import json

import pytest

from ipdiff.models import TestReport
from ipdiff.report_manager import SUMMARY_HEADER, TIMINGS_HEADER, ReportManager


def _report(name, passed=True, z=(0.5, -1.5)):
    return TestReport(name=name, anchor="anchor", sample_sizes=[10, 20], statistic=1.5, z_scores=list(z),
                      passed=passed, tolerance="|z| <= 4", runtime_seconds=0.25)


@pytest.fixture
def manager():
    m = ReportManager()
    m.add_reports([_report("a"), _report("b", passed=False)])
    return m


def test_reports_keep_insertion_order(manager):
    assert [r.name for r in manager.get_all_reports()] == ["a", "b"]
    assert manager.count_failed() == 1


def test_replacing_a_report_keeps_one(manager):
    manager.add_report(_report("a", passed=False))
    assert len(manager.get_all_reports()) == 2
    assert manager.count_failed() == 2


def test_exit_codes(manager):
    assert manager.exit_code() == 1
    manager.add_report(_report("b"))
    assert manager.all_passed() and manager.exit_code() == 0


def test_summary_rows(manager):
    row = manager.summary_rows()[0]
    assert row == ["a", "anchor", True, 1.5, None, 1.5, 30, "|z| <= 4"]


def test_json_has_no_wall_clock(manager, tmp_path):
    path = manager.write_json(tmp_path / "report.json", provenance={"config_hash": "h", "master_seed": 3})
    payload = json.loads(path.read_text())
    assert [r["name"] for r in payload] == ["a", "b"]
    assert all("runtime_seconds" not in r for r in payload)
    assert payload[0]["metadata"] == {"config_hash": "h", "master_seed": 3}


def test_csv_outputs(manager, tmp_path):
    summary = manager.write_summary_csv(tmp_path / "summary.csv", meta={"config_hash": "h"}).read_text().splitlines()
    assert summary[0] == "# config_hash=h"
    assert summary[1] == ",".join(SUMMARY_HEADER)
    assert summary[2].startswith("a,anchor,true,")
    timings = manager.write_timings_csv(tmp_path / "timings.csv").read_text().splitlines()
    assert timings == [",".join(TIMINGS_HEADER), "a,0.25", "b,0.25"]


def test_report_schema_example_validates():
    example = TestReport.model_config["json_schema_extra"]["example"]
    assert TestReport.model_json_schema()["example"] == example
    assert TestReport(**example).passed
