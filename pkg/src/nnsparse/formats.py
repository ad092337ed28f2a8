"""CSV/JSON readers and writers used by the command line.

* Dictionary CSV: one row per band, one column per atom, no header unless
  ``header=True`` (then the first row holds atom names).
* Observation CSV: one row per band, one column per observation.
* Ground-truth JSON: ``{"coefficients": [...], "distortion": [...], "support": [...]}``
  with 0-based indices.

Numbers are written with 17 significant digits so they round-trip exactly.
Every write goes to a temporary file that is renamed into place.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile

import numpy as np

from .conditions import GroundTruth
from .errors import NNSparseError

FLOAT_FMT = "%.17g"


class ParseError(NNSparseError, ValueError):
    """A data file could not be parsed."""


def atomic_write(path, text: str) -> None:
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def fmt(v) -> str:
    return FLOAT_FMT % v


def read_matrix_csv(path, header: bool = False):
    """Read a numeric CSV; returns ``(matrix, names)`` where ``names`` may be None.

    Raises
    ------
    ParseError
        Naming the file and line of the first malformed row.
    """
    names = None
    rows = []
    width = None
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if header and names is None:
                names = [c.strip() for c in row]
                width = len(names)
                continue
            try:
                values = [float(c) for c in row]
            except ValueError as exc:
                raise ParseError(f"{path}: line {lineno}: {exc}") from None
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise ParseError(
                    f"{path}: line {lineno}: expected {width} columns, found {len(values)}"
                )
            if not all(math.isfinite(v) for v in values):
                raise ParseError(f"{path}: line {lineno}: non-finite value")
            rows.append(values)
    if not rows:
        raise ParseError(f"{path}: no numeric rows")
    return np.asarray(rows, dtype=float), names


def write_matrix_csv(path, M, names=None) -> None:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if names is not None:
        w.writerow(names)
    for row in M:
        w.writerow([fmt(v) for v in row])
    atomic_write(path, buf.getvalue())


def read_dictionary(path, header: bool = False):
    A, names = read_matrix_csv(path, header)
    return A, names


def read_observations(path) -> np.ndarray:
    """Observation matrix ``(L, n_obs)``; a single column comes back as ``(L, 1)``."""
    Y, _ = read_matrix_csv(path)
    return Y


def truth_to_dict(truth: GroundTruth, support=None) -> dict:
    support = truth.support if support is None else support
    return {
        "coefficients": [float(v) for v in truth.coefficients],
        "distortion": [float(v) for v in truth.distortion],
        "support": [int(i) for i in support],
    }


def dumps(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON text with floats at 17 significant digits; non-finite floats become strings."""
    pad = " " * (indent * (_level + 1))
    close = " " * (indent * _level)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + close + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in obj):
            return "[" + ", ".join(dumps(v, indent, _level + 1) for v in obj) + "]"
        items = [pad + dumps(v, indent, _level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + close + "]"
    if obj is None or isinstance(obj, (bool, np.bool_)):
        return json.dumps(None if obj is None else bool(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return fmt(v) if math.isfinite(v) else json.dumps(str(v))
    return json.dumps(str(obj))


def write_json(path, obj) -> None:
    atomic_write(path, dumps(obj) + "\n")


def read_json(path):
    with open(path) as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: line {exc.lineno}: {exc.msg}") from None


def read_truth(path) -> tuple[GroundTruth, list]:
    d = read_json(path)
    missing = {"coefficients", "distortion"} - set(d)
    if missing:
        raise ParseError(f"{path}: missing keys {sorted(missing)}")
    try:
        truth = GroundTruth(d["coefficients"], d["distortion"])
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from None
    return truth, list(d.get("support", truth.support.tolist()))
