"""CSV tables, JSON summaries and seed manifests.

Floats are written with 17 significant digits (``format(v, ".17g")``) so a
table parses back to the same binary values; every file ends with a newline.
"""

from __future__ import annotations

import csv
import hashlib
import io as _io
import json
import math
from pathlib import Path

import numpy as np

MANIFEST_SCHEMA = "zrp-manifest/1"


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, ".17g")
    return str(v)


def csv_text(header, rows) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(header))
    for row in rows:
        if len(row) != len(header):
            raise ValueError(f"row has {len(row)} fields, header has {len(header)}")
        w.writerow([format_value(v) for v in row])
    return buf.getvalue()


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(csv_text(header, rows), encoding="utf-8", newline="")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def parse_value(s: str):
    low = s.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        return s


def read_csv(path) -> tuple[list[str], list[list]]:
    """Header and typed rows of a table written by :func:`write_csv`."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path} is empty")
    return rows[0], [[parse_value(v) for v in row] for row in rows[1:]]


def write_trajectory_csv(traj, path) -> Path:
    """Columns t, i, j, applied; one line per recorded point."""
    rows = zip(traj.times.tolist(), traj.sources.tolist(), traj.destinations.tolist(), traj.applied.tolist())
    return write_csv(path, ("t", "i", "j", "applied"), rows)


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v.tolist()]
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else format_value(v)
    return v


def json_text(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json_text(obj), encoding="utf-8")
    return path


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def manifest(experiment: str, config_text: str, seed: int, version: str, wall_clock: float,
             files: dict, extra: dict | None = None) -> dict:
    """Manifest content: the seed is stored as an exact integer."""
    out = {
        "schema": MANIFEST_SCHEMA,
        "experiment": experiment,
        "config_sha256": sha256_text(config_text),
        "seed": int(seed),
        "version": version,
        "wall_clock_seconds": float(wall_clock),
        "files": {name: sha256_file(p) for name, p in sorted(files.items())},
    }
    if extra:
        out.update(extra)
    return out
