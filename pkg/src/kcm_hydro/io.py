"""Plain-text emitters for configurations, trajectories, profiles and tables.

Floats are written with 17 significant digits so files round-trip
exactly and reruns produce identical bytes.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path

import numpy as np


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return format(x, ".17g")
    return str(x)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        # JSON has no infinity; keep it as a tagged string
        return "inf" if math.isinf(x) and x > 0 else ("-inf" if math.isinf(x) else x)
    return obj


def write_json(path, obj) -> Path:
    path = Path(path)
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def write_table(path_stem, header, rows, fmt_name: str = "csv") -> Path:
    """Write rows as CSV or as a JSON list of records."""
    if fmt_name == "csv":
        return write_csv(Path(str(path_stem) + ".csv"), header, rows)
    if fmt_name == "json":
        return write_json(Path(str(path_stem) + ".json"), [dict(zip(header, r)) for r in rows])
    raise ValueError(f"unknown format {fmt_name!r}")


def write_configuration(path, config) -> Path:
    path = Path(path)
    path.write_text(config.to_string())
    return path


def trajectory_rows(records, style: str = "long"):
    """Rows (replica, t, x, eta) or (replica, t, bits)."""
    for r, rec in enumerate(records):
        for t, snap in zip(rec.macro_times, rec.snapshots):
            if style == "long":
                for x, v in enumerate(snap.occupancy):
                    yield (r, t, x, int(v))
            elif style == "bits":
                yield (r, t, snap.to_string().strip())
            else:
                raise ValueError(f"unknown trajectory style {style!r}")


def field_rows(times, snapshots, style: str = "long"):
    """Rows (t, u, rho) or one row per snapshot (t, rho_0, ..., rho_{M-1})."""
    for t, prof in zip(times, snapshots):
        vals = prof.values
        if style == "long":
            u = (np.arange(vals.size) + 0.5) / vals.size
            for uj, v in zip(u, vals):
                yield (t, uj, v)
        elif style == "wide":
            yield (t, *vals)
        else:
            raise ValueError(f"unknown field style {style!r}")


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
