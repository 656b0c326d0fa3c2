"""Small input-validation helpers shared by solvers and problems."""

import numpy as np


def as_vector(x, length=None, name="x"):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError(f"{name} must be a 1-d vector, got shape {x.shape}")
    if length is not None and x.shape[0] != length:
        raise ValueError(f"{name} must have length {length}, got {x.shape[0]}")
    return x


def as_matrix(a, shape=None, name="matrix"):
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise ValueError(f"{name} must be a 2-d matrix, got shape {a.shape}")
    if shape is not None:
        rows, cols = shape
        if rows is not None and a.shape[0] != rows:
            raise ValueError(f"{name} must have {rows} rows, got {a.shape[0]}")
        if cols is not None and a.shape[1] != cols:
            raise ValueError(f"{name} must have {cols} columns, got {a.shape[1]}")
    return a


def check_finite(value, name):
    if not np.all(np.isfinite(value)):
        raise ValueError(f"{name} must be finite")
    return value


def check_positive(value, name, strict=True):
    if not np.isfinite(value) or (value <= 0 if strict else value < 0):
        kind = "positive" if strict else "nonnegative"
        raise ValueError(f"{name} must be a finite {kind} number, got {value!r}")
    return value
