"""CSV persistence for traces: header row, ``%.9g`` numbers, LF endings."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from ..core import UsageError
from .trace import SimulationTrace

__all__ = ["write_trace_csv", "read_trace_csv", "format_number", "TraceFormatError"]


class TraceFormatError(UsageError):
    """A trace file is malformed."""


def format_number(x: float) -> str:
    if np.isnan(x):
        return "nan"
    out = "%.9g" % x
    return "0" if out == "-0" else out


def write_trace_csv(trace: SimulationTrace, path) -> None:
    names = trace.names
    cols = [trace[c] for c in names]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for r in range(len(trace)):
            w.writerow([format_number(col[r]) for col in cols])


def read_trace_csv(path) -> SimulationTrace:
    p = Path(path)
    with open(p, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise TraceFormatError(f"{p}: empty file, expected a header row")
    header = rows[0]
    if not header or header[0] != "time":
        raise TraceFormatError(f"{p}:1: first column must be 'time'")
    if len(set(header)) != len(header):
        raise TraceFormatError(f"{p}:1: duplicate column names")
    data = np.empty((len(rows) - 1, len(header)))
    for r, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise TraceFormatError(f"{p}:{r}: {len(row)} fields, header has {len(header)}")
        for c, cell in enumerate(row):
            try:
                data[r - 2, c] = float(cell)
            except ValueError:
                raise TraceFormatError(f"{p}:{r}: column {header[c]!r}: not a number: {cell!r}") from None
    time = data[:, 0]
    if np.any(np.diff(time) <= 0):
        raise TraceFormatError(f"{p}: time column is not strictly increasing")
    try:
        return SimulationTrace({name: data[:, k].copy() for k, name in enumerate(header)})
    except UsageError as exc:
        raise TraceFormatError(f"{p}:1: {exc}") from exc
