"""Text formats for matrices, sampling sets, traces and summaries.

Matrix files: first line "rows cols", then whitespace-separated row-major
64-bit decimal floats (one matrix row per line).  Sampling-set files: a
JSON header line with the grid dimensions, then one line per observation
"i_1 ... i_d value" with 1-based indices.  Floats are written with repr,
which round-trips exactly, so writers are byte-deterministic.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .trcomp import SamplingSet

__all__ = [
    "write_matrix",
    "read_matrix",
    "write_sampling",
    "read_sampling",
    "write_csv",
    "write_json",
]


def _fmt(value: float) -> str:
    return repr(float(value))


def write_matrix(path, a: np.ndarray) -> None:
    a = np.atleast_2d(np.asarray(a, dtype=float))
    lines = [f"{a.shape[0]} {a.shape[1]}"]
    lines.extend(" ".join(_fmt(v) for v in row) for row in a)
    Path(path).write_text("\n".join(lines) + "\n")


def read_matrix(path) -> np.ndarray:
    text = Path(path).read_text().split("\n", 1)
    rows, cols = (int(t) for t in text[0].split())
    values = np.array(text[1].split(), dtype=float)
    if values.size != rows * cols:
        raise ValueError(f"{path}: expected {rows * cols} entries, "
                         f"found {values.size}")
    return values.reshape(rows, cols)


def write_sampling(path, sampling: SamplingSet) -> None:
    lines = [json.dumps({"dims": list(sampling.dims)})]
    for idx, val in zip(sampling.indices, sampling.values):
        lines.append(" ".join(str(int(i) + 1) for i in idx) + " " + _fmt(val))
    Path(path).write_text("\n".join(lines) + "\n")


def read_sampling(path) -> SamplingSet:
    lines = Path(path).read_text().strip().split("\n")
    header = json.loads(lines[0])
    dims = tuple(int(n) for n in header["dims"])
    d = len(dims)
    indices = []
    values = []
    for line in lines[1:]:
        parts = line.split()
        if len(parts) != d + 1:
            raise ValueError(f"{path}: malformed observation line {line!r}")
        indices.append([int(t) - 1 for t in parts[:d]])
        values.append(float(parts[d]))
    return SamplingSet(np.array(indices, dtype=np.int64).reshape(-1, d),
                       np.array(values, dtype=float), dims)


def write_csv(path, columns: dict[str, np.ndarray]) -> None:
    """Comma-separated with a header row, '.' decimals, LF line endings."""
    names = list(columns)
    length = len(next(iter(columns.values())))
    rows = [",".join(names)]
    for i in range(length):
        cells = []
        for name in names:
            v = columns[name][i]
            cells.append(str(int(v)) if name == "iter" else _fmt(v))
        rows.append(",".join(cells))
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(rows) + "\n")


def write_json(path, payload: dict) -> None:
    with open(path, "w", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
