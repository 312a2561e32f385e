"""Deterministic report writers shared by the command line and the library."""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np


def fmt_float(v) -> str:
    """17 significant digits, enough to round-trip a double."""
    return format(float(v), ".17g")


def _plain(v):
    if isinstance(v, dict):
        return {str(k): _plain(val) for k, val in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, np.ndarray):
        return [_plain(x) for x in v.tolist()]
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer, int)):
        return int(v)
    if isinstance(v, (np.floating, float)):
        f = float(v)
        if math.isnan(f):
            return "nan"
        if math.isinf(f):
            return "inf" if f > 0 else "-inf"
        return f
    if hasattr(v, "value") and isinstance(getattr(v, "value"), str):
        return v.value
    return v


def dumps_json(obj) -> str:
    """Sorted keys, non-finite floats as strings, trailing newline."""
    return json.dumps(_plain(obj), sort_keys=True, indent=2) + "\n"


def csv_text(header: list[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt_float(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def write_text(path: Path, text: str) -> None:
    Path(path).write_text(text, encoding="utf-8", newline="")
