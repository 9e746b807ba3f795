"""Deterministic CSV, JSON and plain-data writers.

Floats are written with ``repr`` so that repeated runs produce
byte-identical files and values round-trip exactly.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence, Union

import numpy as np

PathLike = Union[str, Path]


def _cell(v: Any) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: PathLike, columns: Sequence[str], rows: Iterable[Dict[str, Any]]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(row.get(c)) for c in columns])


def read_csv(path: PathLike) -> List[Dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def w_columns(C: int) -> List[str]:
    cols = []
    for c in range(C):
        cols += [f"w{c}_re", f"w{c}_im"]
    return cols


def write_w_csv(path: PathLike, W: np.ndarray) -> None:
    """One row per antenna; real and imaginary parts of each column interleaved."""
    W = np.asarray(W, dtype=complex)
    cols = w_columns(W.shape[1])
    rows = []
    for n in range(W.shape[0]):
        row = {}
        for c in range(W.shape[1]):
            row[f"w{c}_re"] = float(W[n, c].real)
            row[f"w{c}_im"] = float(W[n, c].imag)
        rows.append(row)
    write_csv(path, cols, rows)


def read_w_csv(path: PathLike) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        data = np.array([[float(v) for v in row] for row in reader], dtype=float)
    if len(header) % 2 or data.ndim != 2 or data.shape[1] != len(header):
        raise ValueError(f"{path} is not a beamformer CSV")
    return data[:, 0::2] + 1j * data[:, 1::2]


def _jsonable(v: Any) -> Any:
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else None
    return v


def write_json(path: PathLike, data: Dict[str, Any]) -> None:
    with open(path, "w") as fh:
        json.dump(_jsonable(data), fh, indent=2, sort_keys=True)
        fh.write("\n")


def emit_plot_data(path: PathLike, columns: Sequence[str], rows: Iterable[Sequence[Any]],
                   comment: str = "") -> None:
    """Whitespace-separated columns with a ``#`` header, readable by gnuplot."""
    with open(path, "w") as fh:
        if comment:
            for line in comment.splitlines():
                fh.write(f"# {line}\n")
        fh.write("# " + " ".join(columns) + "\n")
        for row in rows:
            fh.write(" ".join(_cell(v) if _cell(v) else "NaN" for v in row) + "\n")
