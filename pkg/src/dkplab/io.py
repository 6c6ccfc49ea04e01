"""CSV/JSON writers with a fixed float format, and weight import."""
from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .fields import BoundaryWeight
from .grid import HalfSpaceGrid


def fmt(v) -> str:
    """17 significant digits for floats; ints and strings pass through."""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if v == 0.0:
            return "0"  # folds -0.0
        return format(v, ".17g")
    return str(v)


def write_csv(path, columns, rows):
    """Write ``rows`` (sequence of sequences) under ``columns`` with :func:`fmt`."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            r = list(r)
            if len(r) != len(columns):
                raise ValueError(f"{path.name}: row has {len(r)} fields, expected {len(columns)}")
            w.writerow([fmt(v) for v in r])
    return path


def read_csv(path):
    """Return ``(columns, float array)``."""
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        cols = next(rd)
        data = [[float(v) for v in row] for row in rd]
    return cols, np.array(data, dtype=float).reshape(-1, len(cols))


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, (set, tuple)):
        return list(o)
    return str(o)


def write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2, default=_jsonable)
        fh.write("\n")
    return path


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def load_weight_csv(path, grid: HalfSpaceGrid, provenance=None) -> BoundaryWeight:
    """Boundary weight from a CSV with columns ``(y..., w)`` on the grid's boundary nodes.

    Rows may come in any order; every boundary node must appear once.
    """
    cols, data = read_csv(path)
    n = grid.n
    if data.shape[1] != n + 1:
        raise ValueError(f"{path}: expected {n + 1} columns (y..., w), found {data.shape[1]}")
    idx = np.rint((data[:, :n] + grid.x_max) / grid.h).astype(int)
    if np.any(np.abs(idx * grid.h - grid.x_max - data[:, :n]) > 1e-9 * max(1.0, grid.x_max)):
        raise ValueError(f"{path}: coordinates are not boundary nodes of the grid")
    if np.any(idx < 0) or np.any(idx >= grid.nx):
        raise ValueError(f"{path}: coordinates outside the truncated boundary")
    if len(data) != grid.nx ** n:
        raise ValueError(f"{path}: expected {grid.nx ** n} rows, found {len(data)}")
    dens = np.full((grid.nx,) * n, np.nan)
    dens[tuple(idx.T)] = data[:, n]
    if np.isnan(dens).any():
        raise ValueError(f"{path}: missing boundary nodes")
    return BoundaryWeight(grid, dens, provenance=provenance or {"source": str(path)})
