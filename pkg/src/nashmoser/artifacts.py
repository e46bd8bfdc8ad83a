"""Deterministic artifact writers (CSV, JSON) tagged with the config hash."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

TRACE_CSV_VERSION = "1"
SWEEP_CSV_VERSION = "1"
RESULT_NEUTRAL_KEYS = frozenset({"sweep.workers"})


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else repr(f)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n"


def config_hash(flat: dict) -> str:
    """sha256 of the canonical JSON of a resolved flat config.

    Keys that cannot change results (output location, worker count) are excluded.
    """
    payload = {k: v for k, v in flat.items() if not k.startswith("output.") and k not in RESULT_NEUTRAL_KEYS}
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


def write_json(path: Path, obj: dict, chash: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps({"config_hash": chash, **obj}))
    return path


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        f = float(v)
        return "" if math.isnan(f) else repr(f)
    return str(v)


def csv_text(columns: Sequence[str], rows: Iterable[dict], chash: str, version: str) -> str:
    buf = io.StringIO()
    buf.write(f"# config_hash={chash} columns_version={version}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row.get(c, "")) for c in columns])
    return buf.getvalue()


def write_csv(path: Path, columns: Sequence[str], rows: Iterable[dict], chash: str, version: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(csv_text(columns, rows, chash, version))
    return path
