"""CSV readers/writers for monthly series, Trends-style weekly exports and panels."""
from __future__ import annotations

import csv
import datetime as dt
import math
from pathlib import Path

import numpy as np

from .errors import ParseError
from .series import MonthlySeries, MonthStamp, ObservationPanel, WeeklySeries

BELOW_THRESHOLD = 0.5


def format_value(value) -> str:
    value = float(value)
    if math.isnan(value):
        return ""
    return repr(value)


def _parse_value(text, path, line):
    text = text.strip()
    if text == "":
        return np.nan
    try:
        return float(text)
    except ValueError:
        raise ParseError(path, line, f"not a number: {text!r}") from None


def _parse_month(text, path, line):
    try:
        return MonthStamp.parse(text)
    except ValueError as exc:
        raise ParseError(path, line, f"malformed date {text.strip()!r} ({exc})") from None


def _data_rows(path):
    """Yield (line number, fields) for non-blank, non-comment rows."""
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or not "".join(row).strip():
                continue
            if row[0].lstrip().startswith("#"):
                continue
            yield lineno, row


def _collect_months(rows, path, ncols):
    """Parse dated rows into (start, array) filling gaps with NaN."""
    stamps, values = [], []
    for lineno, row in rows:
        if len(row) != ncols:
            raise ParseError(path, lineno, f"expected {ncols} fields, got {len(row)}")
        month = _parse_month(row[0], path, lineno)
        if stamps and month <= stamps[-1]:
            raise ParseError(path, lineno, f"date {month} is not after {stamps[-1]}")
        stamps.append(month)
        values.append([_parse_value(v, path, lineno) for v in row[1:]])
    if not stamps:
        raise ParseError(path, 0, "no data rows")
    start = stamps[0]
    out = np.full((stamps[-1] - start + 1, ncols - 1), np.nan)
    for month, vals in zip(stamps, values):
        out[month - start] = vals
    return start, out


def read_monthly_csv(path) -> MonthlySeries:
    rows = _data_rows(path)
    try:
        lineno, header = next(rows)
    except StopIteration:
        raise ParseError(path, 0, "empty file") from None
    if [h.strip().lower() for h in header] != ["date", "value"]:
        raise ParseError(path, lineno, f"expected header 'date,value', got {','.join(header)!r}")
    start, data = _collect_months(rows, path, 2)
    return MonthlySeries(start, data[:, 0])


def write_monthly_csv(series: MonthlySeries, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("date,value\n")
        for month, value in zip(series.months, series.values):
            fh.write(f"{month},{format_value(value)}\n")


def read_weekly_csv(path, below_threshold: float = BELOW_THRESHOLD) -> tuple[str, WeeklySeries]:
    """Read a Trends export; returns (query label, weekly series)."""
    rows = _data_rows(path)
    try:
        lineno, header = next(rows)
    except StopIteration:
        raise ParseError(path, 0, "empty file") from None
    if len(header) != 2 or header[0].strip().lower() != "week":
        raise ParseError(path, lineno, f"expected header 'Week,<query>', got {','.join(header)!r}")
    label = header[1].strip()
    days, values = [], []
    for lineno, row in rows:
        if len(row) != 2:
            raise ParseError(path, lineno, f"expected 2 fields, got {len(row)}")
        try:
            day = dt.date.fromisoformat(row[0].strip())
        except ValueError:
            raise ParseError(path, lineno, f"malformed date {row[0].strip()!r}") from None
        if days and (day - days[-1]).days != 7:
            raise ParseError(path, lineno, f"week {day} is not 7 days after {days[-1]}")
        text = row[1].strip()
        value = below_threshold if text == "<1" else _parse_value(text, path, lineno)
        if not np.isnan(value) and not 0 <= value <= 100:
            raise ParseError(path, lineno, f"value {value} outside [0, 100]")
        days.append(day)
        values.append(value)
    if not days:
        raise ParseError(path, 0, "no data rows")
    return label, WeeklySeries(tuple(days), np.array(values))


def read_panel_csv(path) -> ObservationPanel:
    rows = _data_rows(path)
    try:
        lineno, header = next(rows)
    except StopIteration:
        raise ParseError(path, 0, "empty file") from None
    header = [h.strip() for h in header]
    if len(header) < 3 or header[0].lower() != "date" or header[1].lower() != "target":
        raise ParseError(path, lineno, "expected header 'date,target,sqv_1,...'")
    start, data = _collect_months(rows, path, len(header))
    return ObservationPanel.from_array(start, data, names=tuple(header[2:]))


def write_panel_csv(panel: ObservationPanel, path) -> None:
    data = panel.as_array()
    with open(path, "w", newline="") as fh:
        fh.write(",".join(("date", "target") + panel.names) + "\n")
        for month, row in zip(panel.target.months, data):
            fh.write(",".join([str(month)] + [format_value(v) for v in row]) + "\n")


def write_rows_csv(path, header, rows) -> None:
    """Generic CSV writer; floats use round-trip formatting."""
    with open(Path(path), "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            cells = []
            for v in row:
                if isinstance(v, (float, np.floating)):
                    cells.append(format_value(v))
                elif v is None:
                    cells.append("")
                else:
                    cells.append(str(v))
            fh.write(",".join(cells) + "\n")
