"""CSV reading and writing of subject records.

Input files have a header row. The first four columns are fixed::

    entry,status,time1,time2,<covariate columns...>

``status`` is one of ``exact``, ``interval`` or ``right``. ``time1`` is the
event time (exact), the left endpoint (interval) or the censoring time
(right); ``time2`` is the right endpoint and is left empty for the other
two classes. Every remaining column is a numeric covariate.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .errors import CureSieveError, DataError
from .likelihood import Dataset, Status, Subject

__all__ = ["InputError", "read_dataset", "write_dataset", "parse_rows"]

FIXED_COLUMNS = ("entry", "status", "time1", "time2")
_STATUS = {"exact": Status.EXACT, "interval": Status.INTERVAL, "right": Status.RIGHT}


class InputError(CureSieveError, ValueError):
    """Malformed input file; the message carries the line number."""


def _number(text: str, line: int, column: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise InputError(f"line {line}: column {column!r}: cannot parse {text!r} as a number") from None
    if not math.isfinite(value):
        raise InputError(f"line {line}: column {column!r}: value must be finite, got {text!r}")
    return value


def parse_rows(rows: list[list[str]], tau: float) -> tuple[Dataset, list[str]]:
    """Build a dataset from raw CSV rows (header first)."""
    if not rows:
        raise InputError("no records: the file is empty")
    header = [h.strip() for h in rows[0]]
    if tuple(h.lower() for h in header[:4]) != FIXED_COLUMNS:
        raise InputError(f"line 1: header must start with {','.join(FIXED_COLUMNS)}, got {','.join(header[:4])}")
    names = header[4:]
    subjects = []
    for offset, row in enumerate(rows[1:]):
        line = offset + 2
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(header):
            raise InputError(f"line {line}: expected {len(header)} fields, found {len(row)}")
        cells = [c.strip() for c in row]
        q = _number(cells[0], line, "entry")
        status = _STATUS.get(cells[1].lower())
        if status is None:
            raise InputError(f"line {line}: status must be exact, interval or right, got {cells[1]!r}")
        time1 = _number(cells[2], line, "time1")
        if status == Status.INTERVAL:
            if not cells[3]:
                raise InputError(f"line {line}: interval records need time2")
            time2 = _number(cells[3], line, "time2")
        elif cells[3]:
            raise InputError(f"line {line}: time2 must be empty for {cells[1].lower()} records")
        z = [_number(c, line, names[k]) for k, c in enumerate(cells[4:])]

        if q < 0:
            raise InputError(f"line {line}: entry time must be non-negative")
        if status == Status.EXACT:
            if not q < time1 <= tau:
                raise InputError(f"line {line}: exact records need entry < time1 <= tau ({tau:g})")
            subjects.append(Subject.exact(q, time1, z))
        elif status == Status.INTERVAL:
            if not q <= time1 < time2 <= tau:
                raise InputError(f"line {line}: interval records need entry <= time1 < time2 <= tau ({tau:g})")
            subjects.append(Subject.interval(q, time1, time2, z))
        else:
            if not q <= time1 <= tau:
                raise InputError(f"line {line}: right-censored records need entry <= time1 <= tau ({tau:g})")
            subjects.append(Subject.right(q, time1, z))
    if not subjects:
        raise InputError("no records: the file has a header but no data rows")
    try:
        data = Dataset.from_subjects(subjects, tau)
    except DataError as exc:
        raise InputError(str(exc)) from exc
    return data, names


def read_dataset(path, tau: float) -> tuple[Dataset, list[str]]:
    """Read a subject CSV; returns the dataset and covariate column names."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return parse_rows(rows, tau)


def write_dataset(data: Dataset, path, names: list[str] | None = None) -> None:
    """Write ``data`` in the input schema (lossless for float64 values)."""
    names = names or [f"z{k + 1}" for k in range(data.d)]
    if len(names) != data.d:
        raise ValueError("one name per covariate column is required")
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*FIXED_COLUMNS, *names])
        for i in range(data.n):
            st = Status(int(data.status[i]))
            if st == Status.EXACT:
                t1, t2 = data.t[i], ""
            elif st == Status.INTERVAL:
                t1, t2 = data.u[i], repr(float(data.v[i]))
            else:
                t1, t2 = data.v[i], ""
            w.writerow([repr(float(data.q[i])), st.name.lower(), repr(float(t1)), t2, *map(lambda x: repr(float(x)), data.z[i])])


def datasets_equal(a: Dataset, b: Dataset) -> bool:
    same = a.n == b.n and a.d == b.d and a.tau == b.tau and np.array_equal(a.status, b.status)
    return bool(
        same
        and np.array_equal(a.q, b.q)
        and np.array_equal(a.z, b.z)
        and all(np.array_equal(getattr(a, k), getattr(b, k), equal_nan=True) for k in ("t", "u", "v"))
    )
