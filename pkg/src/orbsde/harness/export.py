"""CSV and JSON persistence for result objects.

CSV: comma delimiter, header row, '.' decimal point, floats printed with 17
significant digits (``%.16e``), ``NA`` for missing values.  JSON: floats use
Python's shortest round-trip repr, and integral floats are written as
integers, so re-import gives back equal values.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from ..errors import OrbsdeError

_EXACT_INT = 2.0**53


class ExportError(OrbsdeError):
    """Writing or reading a result file failed."""


def format_float(x) -> str:
    if x is None:
        return "NA"
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "NA"
    return f"{x:.16e}"


def to_jsonable(obj):
    """Plain JSON types; integral floats become ints."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isfinite(x) and x.is_integer() and abs(x) < _EXACT_INT:
            return int(x)
        return x
    if hasattr(obj, "to_dict"):
        return to_jsonable(obj.to_dict())
    return obj


def _tabular(obj):
    """``(header, rows)`` for any exportable object."""
    if hasattr(obj, "csv_header"):
        return obj.csv_header(), obj.csv_rows()
    if hasattr(obj, "aggregates"):
        rows = obj.aggregates()
        d = len(rows[0]["y_mean"]) if rows else 0
        header = (["i", "t", "reflection"] + [f"y_mean_{j + 1}" for j in range(d)]
                  + [f"y_stderr_{j + 1}" for j in range(d)]
                  + [f"dk_mean_{j + 1}" for j in range(d)] + ["active"])
        body = [[r["i"], r["t"], r["reflection"], *r["y_mean"], *r["y_stderr"],
                 *r["dk_mean"], r["active"]] for r in rows]
        return header, body
    if hasattr(obj, "to_rows"):
        rows = obj.to_rows()
    elif hasattr(obj, "violations"):
        rows = [dict(v) for v in obj.violations]
    elif isinstance(obj, list):
        rows = obj
    else:
        raise ExportError(f"cannot export {type(obj).__name__} as CSV")
    header = []
    for r in rows:
        header.extend(k for k in r if k not in header)
    return header, [[r.get(k) for k in header] for r in rows]


def _cell(v):
    if isinstance(v, (list, tuple, np.ndarray)):
        return " ".join(_cell(u) for u in np.ravel(np.asarray(v, dtype=object)))
    if isinstance(v, str):
        return v
    return format_float(v)


def write_csv(obj, fh) -> None:
    """Write ``obj`` as CSV to an open text stream."""
    header, rows = _tabular(obj)
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(header)
    writer.writerows([_cell(v) for v in row] for row in rows)


def export(obj, path, fmt: str | None = None) -> Path:
    """Write ``obj`` to ``path`` as CSV or JSON (inferred from the suffix)."""
    path = Path(path)
    fmt = (fmt or path.suffix.lstrip(".") or "json").lower()
    try:
        if fmt == "csv":
            with path.open("w", newline="") as fh:
                write_csv(obj, fh)
        elif fmt == "json":
            payload = obj.summary() if hasattr(obj, "summary") else obj
            path.write_text(json.dumps(to_jsonable(payload), indent=2) + "\n")
        else:
            raise ExportError(f"unknown export format {fmt!r}")
    except OSError as exc:
        raise ExportError(f"cannot write {path}: {exc.strerror}") from exc
    return path


def load_json(path):
    path = Path(path)
    try:
        return json.loads(path.read_text())
    except OSError as exc:
        raise ExportError(f"cannot read {path}: {exc.strerror}") from exc


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ExportError(f"cannot read {path}: {exc.strerror}") from exc
    return (rows[0], rows[1:]) if rows else ([], [])
