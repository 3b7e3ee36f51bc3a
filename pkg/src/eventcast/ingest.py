"""Reading and writing synchronized multivariate stream tables.

A stream table is a CSV file whose first column is a time column and whose
remaining columns hold one numeric stream each::

    t,s1,s2,s3
    0,1.25,0.0,-3e-2
    1,1.31,0.1,-2.9e-2

Rows are turned into :class:`ContextVector` objects. The logical step index
``t`` is always the 0-based data-row index; whatever the file carries in its
time column is kept verbatim in ``ContextVector.stamp``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence


class IngestError(ValueError):
    """Raised for malformed or inconsistent stream tables."""

    def __init__(self, message: str, row: Optional[int] = None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class ContextVector:
    t: int
    values: tuple
    stamp: Optional[str] = None

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class EventVector:
    """Binary image of a context vector: ``flags[i] == 1`` marks a change on stream i."""

    t: int
    flags: tuple

    def __len__(self):
        return len(self.flags)

    @property
    def active(self) -> frozenset:
        return frozenset(i for i, f in enumerate(self.flags) if f)


def _read_header(reader, source) -> list:
    try:
        header = next(reader)
    except StopIteration:
        raise IngestError(f"{source}: empty file") from None
    header = [h.strip() for h in header]
    if len(header) < 2:
        raise IngestError(f"{source}: header needs a time column and at least one value column")
    return header


def read_header(source) -> list:
    """Return the column names of a stream table (time column first)."""
    with open(source, newline="", encoding="utf-8") as fh:
        return _read_header(csv.reader(fh), source)


def open_stream_table(source, expected_n: Optional[int] = None,
                      fill_forward: bool = False) -> Iterator[ContextVector]:
    """Iterate over the rows of a numeric stream table as context vectors.

    Args:
        source: path to the CSV file.
        expected_n: number of value columns the header must declare. ``None``
            accepts whatever the header declares.
        fill_forward: replace blank cells with the previous row's value in the
            same column instead of raising.

    Raises:
        IngestError: on a column-count mismatch, a non-numeric or non-finite
            cell, or a blank cell when ``fill_forward`` is off. Row numbers in
            messages count data rows from 1.
    """
    path = Path(source)
    if not path.exists():
        raise IngestError(f"{source}: no such file")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = _read_header(reader, source)
        n = len(header) - 1
        if expected_n is not None and n != expected_n:
            raise IngestError(f"{source}: header declares {n} value columns, expected {expected_n}")
        previous: Optional[list] = None
        t = 0
        for line in reader:
            row = t + 1
            if not line or (len(line) == 1 and not line[0].strip()):
                # trailing blank line
                continue
            if len(line) != n + 1:
                raise IngestError(f"expected {n + 1} columns, found {len(line)}", row=row)
            values = []
            for j, cell in enumerate(line[1:]):
                cell = cell.strip()
                if cell == "":
                    if not fill_forward:
                        raise IngestError(f"missing value in column '{header[j + 1]}'", row=row)
                    if previous is None:
                        raise IngestError(
                            f"missing value in column '{header[j + 1]}' with nothing to fill forward from",
                            row=row)
                    values.append(previous[j])
                    continue
                try:
                    x = float(cell)
                except ValueError:
                    raise IngestError(f"malformed number {cell!r} in column '{header[j + 1]}'",
                                      row=row) from None
                if not math.isfinite(x):
                    raise IngestError(f"non-finite value {cell!r} in column '{header[j + 1]}'", row=row)
                values.append(x)
            previous = values
            yield ContextVector(t=t, values=tuple(values), stamp=line[0].strip())
            t += 1


def read_stream_table(source, expected_n: Optional[int] = None,
                      fill_forward: bool = False) -> list:
    return list(open_stream_table(source, expected_n=expected_n, fill_forward=fill_forward))


def format_stream_table(vectors: Iterable[ContextVector], names: Sequence[str],
                        time_name: str = "t") -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([time_name, *names])
    for cv in vectors:
        if len(cv.values) != len(names):
            raise IngestError(f"vector at t={cv.t} has {len(cv.values)} values, expected {len(names)}")
        stamp = cv.stamp if cv.stamp is not None else str(cv.t)
        writer.writerow([stamp, *(repr(float(v)) for v in cv.values)])
    return buf.getvalue()


def write_stream_table(vectors: Iterable[ContextVector], path, names: Sequence[str]) -> None:
    Path(path).write_text(format_stream_table(vectors, names), encoding="utf-8")


def event_names(n: int) -> list:
    return [f"e{i + 1}" for i in range(n)]


def format_event_table(events: Iterable[EventVector], n: int) -> str:
    lines = [",".join(["t", *event_names(n)])]
    for ev in events:
        lines.append(",".join([str(ev.t), *(str(int(f)) for f in ev.flags)]))
    return "\n".join(lines) + "\n"


def write_event_table(events: Iterable[EventVector], path, n: int) -> None:
    Path(path).write_text(format_event_table(events, n), encoding="utf-8")


def read_event_table(source) -> list:
    """Read an event CSV (``t,e1,...,en`` with 0/1 cells) into event vectors.

    As with numeric tables, ``t`` is re-assigned from the row index.
    """
    out = []
    with open(source, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = _read_header(reader, source)
        n = len(header) - 1
        for line in reader:
            row = len(out) + 1
            if not line or (len(line) == 1 and not line[0].strip()):
                continue
            if len(line) != n + 1:
                raise IngestError(f"expected {n + 1} columns, found {len(line)}", row=row)
            flags = []
            for cell in line[1:]:
                cell = cell.strip()
                if cell not in ("0", "1"):
                    raise IngestError(f"event flag must be 0 or 1, got {cell!r}", row=row)
                flags.append(int(cell))
            out.append(EventVector(t=len(out), flags=tuple(flags)))
    return out


def looks_like_event_table(source) -> bool:
    """True when the header is exactly ``t,e1,...,en``."""
    header = read_header(source)
    return header[1:] == event_names(len(header) - 1)
