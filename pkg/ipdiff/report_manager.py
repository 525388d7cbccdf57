"""Test report storage, aggregation and output."""

import logging
from pathlib import Path
from typing import Any, Dict, List, Optional

from .models import TestReport
from .utils import log_detail, to_jsonable, write_csv, write_json

logger = logging.getLogger(__name__)

# Wall-clock times go to timings.csv; everything else is a pure function of the seed
SUMMARY_HEADER = ["name", "anchor", "passed", "statistic", "p_value", "max_abs_z", "sample_size", "tolerance"]
TIMINGS_HEADER = ["name", "runtime_seconds"]


class ReportManager:
    """Collects TestReports in insertion order; a report name is unique within a run."""

    def __init__(self):
        self.reports: Dict[str, TestReport] = {}

    def add_report(self, report: TestReport) -> TestReport:
        if report.name in self.reports:
            logger.warning(f"⚠️ Replacing earlier report {report.name!r}")
        self.reports[report.name] = report
        icon = "✅" if report.passed else "❌"
        log_detail(icon, report.name, f"{report.tolerance}; statistic={report.statistic:.4g}")
        return report

    def add_reports(self, reports: List[TestReport]) -> None:
        for r in reports:
            self.add_report(r)

    def get_all_reports(self) -> List[TestReport]:
        return list(self.reports.values())

    def count_failed(self) -> int:
        return sum(1 for r in self.reports.values() if not r.passed)

    def all_passed(self) -> bool:
        return self.count_failed() == 0

    def exit_code(self) -> int:
        return 0 if self.all_passed() else 1

    def summary_rows(self) -> List[List[Any]]:
        rows = []
        for r in self.reports.values():
            max_z = max((abs(z) for z in r.z_scores), default=None)
            rows.append([r.name, r.anchor, r.passed, r.statistic, r.p_value, max_z,
                         sum(r.sample_sizes), r.tolerance])
        return rows

    def write_json(self, path: Path, provenance: Optional[Dict[str, Any]] = None) -> Path:
        """JSON array of reports; provenance is copied into each report's metadata."""
        payload = []
        for r in self.reports.values():
            record = to_jsonable(r.model_dump(exclude={"runtime_seconds"}))
            if provenance:
                record["metadata"] = {**record["metadata"], **provenance}
            payload.append(record)
        return write_json(path, payload)

    def write_summary_csv(self, path: Path, meta: Optional[Dict[str, Any]] = None) -> Path:
        return write_csv(path, SUMMARY_HEADER, self.summary_rows(), meta=meta)

    def write_timings_csv(self, path: Path) -> Path:
        rows = [[r.name, r.runtime_seconds] for r in self.reports.values()]
        return write_csv(path, TIMINGS_HEADER, rows)
