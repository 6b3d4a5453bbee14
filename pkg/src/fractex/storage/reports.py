"""JSON report files and the aligned text table printed by ``evaluate``."""

import json
from pathlib import Path

from pydantic import ValidationError

from fractex.errors import DataError
from fractex.models.report import SUMMARY_ROWS, EvalReport
from fractex.utils.atomic import atomic_write_text


def report_json(report: EvalReport) -> str:
    return json.dumps(report.model_dump(mode="json"), indent=2, sort_keys=True) + "\n"


def save_report(report: EvalReport, path: Path | str) -> Path:
    return atomic_write_text(Path(path), report_json(report))


def load_report(path: Path | str) -> EvalReport:
    path = Path(path)
    try:
        return EvalReport.model_validate_json(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise DataError("report not found", path=path) from exc
    except ValidationError as exc:
        error = exc.errors()[0]
        field = ".".join(str(part) for part in error["loc"])
        raise DataError(error["msg"], path=path, field=field) from exc


def render_table(report: EvalReport, precision: int = 6) -> str:
    """Rows per case followed by the summary rows, columns aligned.

    Columns are the union of metric names in first-seen order; missing cells
    print as ``-``.
    """
    columns: list[str] = []
    for case in report.cases:
        for name in case.metric_values():
            if name not in columns:
                columns.append(name)
    rows = [[case.case_id, *_cells(case.metric_values(), columns, precision)] for case in report.cases]
    for row in SUMMARY_ROWS:
        if row in report.summary:
            rows.append([row, *_cells(report.summary[row], columns, precision)])

    header = ["", *columns]
    widths = [max(len(r[i]) for r in [header, *rows]) for i in range(len(header))]

    def fmt(cells: list[str]) -> str:
        first = cells[0].ljust(widths[0])
        rest = (cell.rjust(width) for cell, width in zip(cells[1:], widths[1:], strict=True))
        return "  ".join([first, *rest]).rstrip()

    lines = [fmt(header), fmt(["-" * w for w in widths])]
    lines.extend(fmt(row) for row in rows)
    return "\n".join(lines)


def _cells(values: dict[str, float], columns: list[str], precision: int) -> list[str]:
    return [f"{values[c]:.{precision}f}" if c in values else "-" for c in columns]
