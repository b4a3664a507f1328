"""Deterministic artifact writing: CSV ingestion/emission and JSON reports.

Every file is written atomically (temp file in the target directory, then
rename), and every serializer is deterministic: stable key order, repr
floats, no timestamps.  Wall-clock timing therefore lives in its own
sidecar file so the main report of a seeded run is byte-stable.
"""

from __future__ import annotations

import csv
import json
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from .model import DataMatrix, center


class ParseError(ValueError):
    """Input file violates the expected rectangular numeric layout."""


def atomic_write_text(path, text: str) -> None:
    """Write text via a temp file and rename, so readers never see partials."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def write_json(path, payload: dict) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True, default=_json_default)
    atomic_write_text(path, text + "\n")


def read_json(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def versions() -> dict:
    """Library versions embedded in every report."""
    import matplotlib
    import scipy

    from . import __version__

    return {
        "partialfactor": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "matplotlib": matplotlib.__version__,
        "python": ".".join(str(v) for v in sys.version_info[:3]),
    }


def _parse_cell(raw: str, row: int, col: int) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ParseError(
            f"non-numeric value {raw!r} at row {row}, column {col}") from None


def ingest_csv(path, response_col: str | None = "y",
               do_center: bool = True) -> DataMatrix:
    """Read a rectangular numeric CSV into a DataMatrix.

    A header row is detected by non-numeric cells.  The response column is
    found by name (or by position for headerless files when the flag is a
    plain integer); empty response cells mark unlabeled rows.  Predictor
    columns are centered unless ``do_center`` is false, with the shift
    recorded on the result.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if r]  # tolerate trailing blank lines
    if not rows:
        raise ParseError(f"{path}: file holds no rows")

    def _numeric(cell: str) -> bool:
        try:
            float(cell)
            return True
        except ValueError:
            return False

    header = None
    if any(not _numeric(c) and c.strip() != "" for c in rows[0]):
        header = [c.strip() for c in rows[0]]
        rows = rows[1:]
        if not rows:
            raise ParseError(f"{path}: header but no data rows")

    width = len(rows[0])
    y_idx = None
    if header is not None:
        if response_col is not None and response_col in header:
            y_idx = header.index(response_col)
        if len(header) != width:
            raise ParseError(f"{path}: header has {len(header)} fields, "
                             f"data rows have {width}")
    elif response_col is not None:
        try:
            y_idx = int(response_col)
        except (TypeError, ValueError):
            y_idx = None
        else:
            if not -width <= y_idx < width:
                raise ParseError(f"{path}: response index {y_idx} out of range")
            y_idx %= width

    X_rows, y_vals = [], []
    for i, row in enumerate(rows):
        line = i + (2 if header is not None else 1)
        if len(row) != width:
            raise ParseError(f"{path}: line {line}: expected {width} fields, "
                             f"got {len(row)}")
        feats = []
        for j, cell in enumerate(row):
            if j == y_idx:
                y_vals.append(np.nan if cell.strip() == ""
                              else _parse_cell(cell, line, j + 1))
            else:
                feats.append(_parse_cell(cell, line, j + 1))
        X_rows.append(feats)

    X = np.asarray(X_rows, dtype=float)
    if X.shape[1] == 0:
        raise ParseError(f"{path}: no predictor columns")
    data = DataMatrix(X=X, y=np.asarray(y_vals) if y_idx is not None else None)
    return center(data) if do_center else data


def emit_csv(data: DataMatrix, path) -> None:
    """Write a DataMatrix in raw coordinates (centering shift undone).

    Columns are named x1..xp plus y when a response exists; unlabeled
    rows get an empty response cell.  Floats use repr so a round trip
    through :func:`ingest_csv` preserves values.
    """
    X = data.X if data.column_means is None else data.X + data.column_means
    cols = [f"x{j + 1}" for j in range(data.p)]
    lines = []
    if data.y is not None:
        cols.append("y")
    lines.append(",".join(cols))
    for i in range(data.n):
        cells = [repr(float(v)) for v in X[i]]
        if data.y is not None:
            cells.append("" if not data.labeled[i] else repr(float(data.y[i])))
        lines.append(",".join(cells))
    atomic_write_text(path, "\n".join(lines) + "\n")
