"""JSON matrix format: ``{"rows": R, "cols": C, "data": [row-major floats]}``.

Vectors are stored with ``rows == 1``.
"""
import json
import math

import numpy as np

from .errors import InvalidInputError


def matrix_to_json(a):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a.reshape(1, -1)
    if a.ndim != 2:
        raise InvalidInputError("only vectors and matrices can be serialised")
    return {"rows": int(a.shape[0]), "cols": int(a.shape[1]), "data": [float(v) for v in a.ravel()]}


def matrix_from_json(obj, name="matrix"):
    if not isinstance(obj, dict) or set(obj) != {"rows", "cols", "data"}:
        raise InvalidInputError(f"{name}: expected an object with exactly rows, cols and data")
    rows, cols, data = obj["rows"], obj["cols"], obj["data"]
    if not (isinstance(rows, int) and isinstance(cols, int) and rows >= 1 and cols >= 1):
        raise InvalidInputError(f"{name}: rows and cols must be positive integers")
    if not isinstance(data, list) or len(data) != rows * cols:
        raise InvalidInputError(f"{name}: data must hold rows*cols = {rows * cols} numbers")
    if not all(isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v) for v in data):
        raise InvalidInputError(f"{name}: data must contain finite numbers only")
    return np.asarray(data, dtype=np.float64).reshape(rows, cols)


def vector_from_json(obj, name="vector"):
    a = matrix_from_json(obj, name)
    if a.shape[0] != 1:
        raise InvalidInputError(f"{name}: a vector must have rows == 1")
    return a[0]


def load_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise InvalidInputError(f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"{path} is not valid JSON: {exc}") from exc


def load_matrix(path):
    return matrix_from_json(load_json(path), str(path))


def save_matrix(path, a):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(matrix_to_json(a), fh)
