"""Sample CSV files, Gaussian parameter files, JSON reports and CSV result tables.

Gaussian parameter file::

    # optional comments
    2              <- dimension d
    0.0 1.0        <- mean (d numbers, whitespace or comma separated)
    2.0 0.3        <- d covariance rows
    0.3 1.0
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

from .errors import ParseError
from .gw import GaussianMeasure


def _float(cell: str, line: int) -> float:
    try:
        v = float(cell)
    except ValueError:
        raise ParseError(f"non-numeric cell {cell!r}", line) from None
    if not math.isfinite(v):
        raise ParseError(f"non-finite value {cell!r}", line)
    return v


def parse_samples_csv(text: str) -> np.ndarray:
    rows = list(csv.reader(io.StringIO(text)))
    # drop trailing blank lines only; blank lines inside are errors
    while rows and not any(c.strip() for c in rows[-1]):
        rows.pop()
    if not rows:
        raise ParseError("empty file", 1)
    header = [c.strip() for c in rows[0]]
    d = len(header)
    expected = [f"x{j + 1}" for j in range(d)]
    if header != expected:
        raise ParseError(f"header must be {','.join(expected)}, got {','.join(header)}", 1)
    if len(rows) == 1:
        raise ParseError("no observations after header", 1)
    out = np.empty((len(rows) - 1, d))
    for i, row in enumerate(rows[1:]):
        line = i + 2
        if len(row) != d:
            raise ParseError(f"expected {d} cells, got {len(row)}", line)
        out[i] = [_float(c.strip(), line) for c in row]
    return out


def ingest_csv(path) -> np.ndarray:
    """Read an (n, d) sample from a CSV file with header ``x1,...,xd``."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ParseError(f"no such file: {path}") from None
    return parse_samples_csv(text)


def format_samples_csv(x: np.ndarray) -> str:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"x{j + 1}" for j in range(x.shape[1])])
    for row in x:
        w.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def export_csv(x, path) -> None:
    """Write samples with shortest round-trip float formatting."""
    Path(path).write_text(format_samples_csv(x), encoding="utf-8")


def _numbers(line: str, lineno: int) -> list[float]:
    return [_float(tok, lineno) for tok in line.replace(",", " ").split()]


def parse_gaussian(text: str) -> GaussianMeasure:
    lines = []
    for k, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].strip()
        if body:
            lines.append((k, body))
    if not lines:
        raise ParseError("empty parameter file", 1)
    k, first = lines[0]
    nums = _numbers(first, k)
    if len(nums) != 1 or nums[0] != int(nums[0]) or nums[0] < 1:
        raise ParseError("first line must be the dimension d >= 1", k)
    d = int(nums[0])
    if len(lines) != d + 2:
        raise ParseError(f"expected 1 mean row and {d} covariance rows", lines[-1][0])
    rows = []
    for k, body in lines[1:]:
        r = _numbers(body, k)
        if len(r) != d:
            raise ParseError(f"expected {d} numbers, got {len(r)}", k)
        rows.append(r)
    cov = np.array(rows[1:])
    if not np.array_equal(cov, cov.T):
        raise ParseError("covariance is not symmetric", lines[2][0])
    return GaussianMeasure(np.array(rows[0]), cov)


def read_gaussian(path) -> GaussianMeasure:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ParseError(f"no such file: {path}") from None
    return parse_gaussian(text)


def format_gaussian(P: GaussianMeasure) -> str:
    lines = [str(P.dim), " ".join(repr(float(v)) for v in P.mean)]
    lines += [" ".join(repr(float(v)) for v in row) for row in P.cov]
    return "\n".join(lines) + "\n"


def write_gaussian(P: GaussianMeasure, path) -> None:
    Path(path).write_text(format_gaussian(P), encoding="utf-8")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if hasattr(obj, "as_dict"):
        return _jsonable(obj.as_dict())
    return obj


def dumps_report(report: dict) -> str:
    """Stable serialisation: sorted keys, fixed separators, NaN/inf as null."""
    return json.dumps(_jsonable(report), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_report(report: dict, path) -> None:
    Path(path).write_text(dumps_report(report), encoding="utf-8")


def read_report(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def format_table(rows: list[dict], columns: list[str] | None = None) -> str:
    """CSV table for external plotting."""
    if not rows:
        return ""
    columns = columns or list(rows[0].keys())
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for r in rows:
        w.writerow({k: _jsonable(r.get(k)) for k in columns})
    return buf.getvalue()


def write_table(rows: list[dict], path, columns: list[str] | None = None) -> None:
    Path(path).write_text(format_table(rows, columns), encoding="utf-8")
