"""CSV / JSON helpers shared by the export functions."""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj


def dumps(record: dict) -> str:
    """Deterministic JSON text (sorted keys, full float repr)."""
    return json.dumps(_plain(record), sort_keys=True, indent=2, allow_nan=True)


def write_json(path, record: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(record) + "\n")
    return path


def read_json(path) -> dict:
    return json.loads(Path(path).read_text())


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def write_columns(path, columns: dict) -> Path:
    """Write equal-length 1D arrays as CSV columns."""
    names = list(columns)
    cols = [np.asarray(columns[n]) for n in names]
    return write_csv(path, names, zip(*cols))


def read_csv(path) -> tuple[list[str], np.ndarray]:
    with Path(path).open() as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)
