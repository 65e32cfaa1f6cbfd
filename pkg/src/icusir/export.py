"""
CSV and JSON writers for command outputs.

Floats are written with 12 significant digits so reruns are byte-identical.
"""

import csv
import json
import math
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .dynamics import Trajectory

DIGITS = 12


def fmt(value: Any) -> str:
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.{DIGITS}g}"
    return str(value)


def _clean(obj: Any) -> Any:
    """Round floats and turn numpy values into JSON-native ones."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if not math.isfinite(v):
            return None if math.isnan(v) else fmt(v)
        return float(fmt(v))
    if hasattr(obj, "value") and isinstance(getattr(obj, "value"), str):
        return obj.value
    return obj


def write_rows(path: Path, rows: Iterable[dict], fields: Sequence[str]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(fields)
        for row in rows:
            writer.writerow([fmt(row[f]) for f in fields])
    return path


def write_trajectory(path: Path, tr: Trajectory) -> Path:
    rows = ({"t": t, "s": s, "i": i, "a": a} for t, s, i, a in zip(tr.t, tr.s, tr.i, tr.a))
    return write_rows(path, rows, ("t", "s", "i", "a"))


def dumps(obj: Any) -> str:
    return json.dumps(_clean(obj), sort_keys=True)


def write_json(path: Path, obj: Any) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n")
    return path


def write_jsonl(path: Path, records: Iterable[Any]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        for rec in records:
            fh.write(dumps(rec) + "\n")
    return path
