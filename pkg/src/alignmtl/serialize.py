"""Bit-stable serialization for matrices, reports and trajectories.

Floats are rendered with 17 significant digits, which round-trips IEEE
doubles exactly, so written files are byte-identical across runs with the
same inputs. Non-finite values are serialized as the strings "inf", "-inf"
and "nan" (bare JSON has no literal for them).
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .validation import check_matrix


class DumpFormatError(ValueError):
    """Malformed gradient dump; carries the offending 1-based line number."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


def fmt_float(x: float) -> str:
    """Shortest exact-round-trip decimal with at most 17 significant digits."""
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if math.isnan(x):
        return "nan"
    return format(x, ".17g")


def _emit(obj, out: list[str]) -> None:
    if obj is None:
        out.append("null")
    elif obj is True:
        out.append("true")
    elif obj is False:
        out.append("false")
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isfinite(x):
            out.append(fmt_float(x))
        else:
            out.append(json.dumps(fmt_float(x)))
    elif isinstance(obj, dict):
        out.append("{")
        for k, item in enumerate(obj.items()):
            if k:
                out.append(", ")
            out.append(json.dumps(str(item[0])))
            out.append(": ")
            _emit(item[1], out)
        out.append("}")
    elif isinstance(obj, (list, tuple, np.ndarray)):
        seq = obj.tolist() if isinstance(obj, np.ndarray) else obj
        out.append("[")
        for k, item in enumerate(seq):
            if k:
                out.append(", ")
            _emit(item, out)
        out.append("]")
    else:
        raise TypeError(f"cannot serialize {type(obj)!r}")


def dumps(obj) -> str:
    """Deterministic JSON text with 17-significant-digit floats."""
    out: list[str] = []
    _emit(obj, out)
    return "".join(out)


def write_json(path, obj) -> None:
    Path(path).write_text(dumps(obj) + "\n", encoding="utf-8")


def loads(text: str):
    return json.loads(text)


def parse_maybe_inf(value) -> float:
    """Read back a float that may have been serialized as "inf"/"-inf"/"nan"."""
    if isinstance(value, str):
        return float(value)
    return float(value)


def write_gradient_dump(path, G, task_names=None) -> None:
    """CSV gradient dump: header of task names, one row per parameter."""
    G = check_matrix(G)
    T = G.shape[1]
    if task_names is None:
        task_names = [f"task{t}" for t in range(T)]
    if len(task_names) != T:
        raise ValueError(f"{len(task_names)} task names for {T} columns")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(task_names)
        for row in G:
            writer.writerow([fmt_float(x) for x in row])


def read_gradient_dump(path) -> tuple[list[str], np.ndarray]:
    """Read a CSV gradient dump; DumpFormatError names the bad line."""
    rows: list[list[float]] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DumpFormatError("empty file", 1) from None
        names = [h.strip() for h in header]
        if not names or any(not n for n in names):
            raise DumpFormatError("header must list task names", 1)
        width = len(names)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise DumpFormatError(f"expected {width} columns, found {len(row)}", lineno)
            try:
                rows.append([float(cell) for cell in row])
            except ValueError:
                raise DumpFormatError("non-numeric cell", lineno) from None
    if not rows:
        raise DumpFormatError("no data rows", 2)
    G = np.array(rows, dtype=np.float64)
    if not np.all(np.isfinite(G)):
        raise DumpFormatError("non-finite entries", 2)
    return names, G
