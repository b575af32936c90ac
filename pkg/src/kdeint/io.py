"""Sample ingestion from CSV and from a compact binary blob.

Blob layout (little-endian): magic ``b"KDI1"``, ``uint32 n``, ``uint32 d``,
``uint32 flags`` (bit 0: a response column follows), then the ``d`` point
columns and the optional response column, each ``n`` float64 values.
"""

from __future__ import annotations

import csv
import math
import struct
from pathlib import Path

import numpy as np

from .density import Sample
from .errors import InputError, ParseError

MAGIC = b"KDI1"
HEADER = struct.Struct("<4sIII")
FLAG_RESPONSES = 1


def _open_text(path):
    try:
        return open(path, newline="")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None


def read_sample_csv(path, *, header: bool = False, responses: bool = False) -> Sample:
    """Read one observation per row.

    With ``responses`` the last column is ``Y``. Blank lines are skipped.

    Raises
    ------
    ParseError
        On a non-numeric or non-finite field, or a row whose width differs
        from the first data row; ``line`` is 1-based.
    """
    rows = []
    width = None
    with _open_text(path) as fh:
        for lineno, fields in enumerate(csv.reader(fh), start=1):
            if header and lineno == 1:
                continue
            if not fields or all(not f.strip() for f in fields):
                continue
            try:
                values = [float(f) for f in fields]
            except ValueError:
                raise ParseError(f"{path}: non-numeric field", lineno) from None
            if not all(math.isfinite(v) for v in values):
                raise ParseError(f"{path}: non-finite value", lineno)
            if width is None:
                width = len(values)
                if width < (2 if responses else 1):
                    raise ParseError(f"{path}: too few columns", lineno)
            elif len(values) != width:
                raise ParseError(f"{path}: expected {width} fields, got {len(values)}", lineno)
            rows.append(values)
    if not rows:
        raise ParseError(f"{path}: no observations")
    data = np.array(rows, dtype=float)
    if responses:
        return Sample(data[:, :-1], data[:, -1])
    return Sample(data)


def write_sample_csv(s: Sample, path) -> None:
    """Write ``s`` without a header, responses last; values in round-trip ``repr`` form."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for i in range(s.n):
            row = [repr(float(v)) for v in s.points[i]]
            if s.responses is not None:
                row.append(repr(float(s.responses[i])))
            w.writerow(row)


def write_sample_blob(s: Sample, path) -> None:
    flags = FLAG_RESPONSES if s.responses is not None else 0
    cols = [s.points[:, j] for j in range(s.d)]
    if s.responses is not None:
        cols.append(s.responses)
    body = np.concatenate(cols).astype("<f8").tobytes()
    Path(path).write_bytes(HEADER.pack(MAGIC, s.n, s.d, flags) + body)


def read_sample_blob(path) -> Sample:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    if len(raw) < HEADER.size:
        raise ParseError(f"{path}: truncated header")
    magic, n, d, flags = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ParseError(f"{path}: bad magic {magic!r}")
    if d < 1:
        raise ParseError(f"{path}: dimension must be >= 1")
    if flags & ~FLAG_RESPONSES:
        raise ParseError(f"{path}: unknown flags {flags:#x}")
    ncols = d + (1 if flags & FLAG_RESPONSES else 0)
    expected = HEADER.size + 8 * n * ncols
    if len(raw) != expected:
        raise ParseError(f"{path}: expected {expected} bytes, found {len(raw)}")
    data = np.frombuffer(raw, dtype="<f8", offset=HEADER.size).reshape(ncols, n).T.astype(float)
    if not np.all(np.isfinite(data)):
        raise ParseError(f"{path}: non-finite value")
    if flags & FLAG_RESPONSES:
        return Sample(data[:, :d], data[:, d])
    return Sample(data)


def read_sample(path, *, header: bool = False, responses: bool = False) -> Sample:
    """Dispatch on content: blobs start with the magic bytes, anything else is CSV."""
    try:
        with open(path, "rb") as fh:
            head = fh.read(len(MAGIC))
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    if head == MAGIC:
        return read_sample_blob(path)
    return read_sample_csv(path, header=header, responses=responses)
