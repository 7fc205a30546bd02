"""File formats: CSV datasets and JSON matrices, priors and reports.

* dataset CSV: header row of variable names, one sample per row.
* matrix JSON: ``{"dim": d, "values": [row-major floats]}``.
* prior JSON: ``{"dim": d, "entries": ["UUF...", ...]}`` with one string per row.

JSON is written with sorted keys and a trailing newline so that identical
content gives identical bytes.
"""
from __future__ import annotations

import csv
import json
import math
import os

import numpy as np

from .milp import PriorSpec

__all__ = [
    "DataError",
    "read_csv",
    "write_csv",
    "read_json",
    "write_json",
    "matrix_to_dict",
    "matrix_from_dict",
    "read_matrix",
    "write_matrix",
    "read_prior",
    "write_prior",
]


class DataError(ValueError):
    """Malformed input file."""


def write_json(path, obj):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc


def write_csv(path, X, names=None):
    X = np.asarray(X, dtype=float)
    names = names or [f"x{j}" for j in range(X.shape[1])]
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in X.tolist():
            w.writerow([repr(v) for v in row])


def read_csv(path):
    """Read a dataset; returns ``(X, names)``.  Errors carry the line number."""
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            names = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != len(names):
                raise DataError(f"{path}:{line}: expected {len(names)} fields, got {len(row)}")
            try:
                vals = [float(v) for v in row]
            except ValueError:
                raise DataError(f"{path}:{line}: non-numeric cell") from None
            if not all(math.isfinite(v) for v in vals):
                raise DataError(f"{path}:{line}: non-finite value")
            rows.append(vals)
    if not rows:
        raise DataError(f"{path}: no samples")
    return np.array(rows, dtype=float), names


def matrix_to_dict(A):
    A = np.asarray(A, dtype=float)
    return {"dim": int(A.shape[0]), "values": [float(v) for v in A.ravel()]}


def matrix_from_dict(obj):
    try:
        d = int(obj["dim"])
        vals = np.asarray(obj["values"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed matrix object: {exc}") from exc
    if vals.size != d * d:
        raise DataError(f"matrix has {vals.size} values, expected {d * d}")
    return vals.reshape(d, d)


def write_matrix(path, A):
    write_json(path, matrix_to_dict(A))


def read_matrix(path):
    return matrix_from_dict(read_json(path))


def write_prior(path, prior):
    write_json(path, prior.to_dict())


def read_prior(path):
    try:
        return PriorSpec.from_dict(read_json(path))
    except (KeyError, ValueError) as exc:
        raise DataError(f"{path}: malformed prior: {exc}") from exc
