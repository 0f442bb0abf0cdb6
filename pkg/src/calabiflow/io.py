"""File formats: diagnostics CSV, potential snapshots, run manifests.

Floats are written with :func:`repr`, the shortest decimal that round-trips,
so identical runs give byte-identical files.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Union

import numpy as np

from .flow import CSV_COLUMNS, DiagnosticsRecord
from .legendre import KahlerPotential
from .potential import SymplecticPotential
from .torus_field import GridSpec, PeriodicField

__all__ = [
    "SNAPSHOT_FORMAT",
    "CsvRecorder",
    "read_csv",
    "snapshot_dict",
    "save_snapshot",
    "load_snapshot",
    "write_json",
]

SNAPSHOT_FORMAT = 1


def _num(x) -> str:
    x = float(x)
    if math.isnan(x) or math.isinf(x):
        return str(x)
    return repr(x)


class CsvRecorder:
    """Append diagnostics rows to a CSV file, flushing after every row."""

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)
        self._fh = open(self.path, "w", newline="", encoding="ascii")
        self._fh.write(",".join(CSV_COLUMNS) + "\n")
        self._fh.flush()

    def __call__(self, record: DiagnosticsRecord) -> None:
        self._fh.write(",".join(_num(v) for v in record.as_row()) + "\n")
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_csv(path: Union[str, Path]) -> dict:
    """Columns of a diagnostics CSV as float arrays keyed by header name."""
    with open(path, newline="", encoding="ascii") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    header, body = rows[0], [r for r in rows[1:] if r]
    cols = {name: [] for name in header}
    for lineno, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise ValueError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        for name, v in zip(header, row):
            cols[name].append(float(v))
    return {k: np.array(v) for k, v in cols.items()}


def snapshot_dict(pot, t: float = 0.0) -> dict:
    """JSON-ready description of a symplectic or Kähler-side potential."""
    spec = pot.spec
    out = {"fmt": SNAPSHOT_FORMAT, "t": float(t), "n": spec.n, "N": spec.N, "scale": spec.scale}
    if isinstance(pot, KahlerPotential):
        out["kind"] = "kahler"
        out["c"] = 1.0
        out["psi"] = pot.phi.values.ravel().tolist()
        return out
    out["c"] = pot.c
    out["psi"] = pot.psi.values.ravel().tolist()
    if pot.offset != 0.0 or any(pot.slope):
        out["a"] = pot.offset
        out["b"] = list(pot.slope)
    return out


def write_json(obj, path: Union[str, Path]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True, allow_nan=False)
        fh.write("\n")


def save_snapshot(pot, path: Union[str, Path], t: float = 0.0) -> None:
    write_json(snapshot_dict(pot, t), path)


def _require(d: dict, key: str, kind, path):
    if key not in d:
        raise ValueError(f"{path}: missing field '{key}'")
    val = d[key]
    if kind is float and isinstance(val, (int, float)) and not isinstance(val, bool):
        return float(val)
    if kind is int and isinstance(val, int) and not isinstance(val, bool):
        return val
    if kind is list and isinstance(val, list):
        return val
    raise ValueError(f"{path}: field '{key}' has the wrong type")


def load_snapshot(path: Union[str, Path]):
    """Inverse of :func:`save_snapshot`; returns ``(potential, t)``."""
    with open(path, encoding="utf-8") as fh:
        d = json.load(fh)
    if not isinstance(d, dict):
        raise ValueError(f"{path}: snapshot must be a JSON object")
    if d.get("fmt") != SNAPSHOT_FORMAT:
        raise ValueError(f"{path}: field 'fmt' must be {SNAPSHOT_FORMAT}")
    spec = GridSpec(
        _require(d, "n", int, path),
        _require(d, "N", int, path),
        _require(d, "scale", float, path),
    )
    psi = np.asarray(_require(d, "psi", list, path), dtype=float)
    if psi.size != spec.N**spec.n:
        raise ValueError(f"{path}: field 'psi' has {psi.size} values, expected {spec.N ** spec.n}")
    field = PeriodicField(spec, psi.reshape(spec.shape))
    t = _require(d, "t", float, path)
    if d.get("kind", "symplectic") == "kahler":
        return KahlerPotential(spec, field), t
    slope = d.get("b")
    u = SymplecticPotential(
        spec, _require(d, "c", float, path), field, float(d.get("a", 0.0)),
        None if slope is None else tuple(slope),
    )
    return u, t
