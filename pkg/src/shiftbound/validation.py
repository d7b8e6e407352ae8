"""Input validation helpers shared across the public API."""

from __future__ import annotations

import numpy as np


class ValidationError(ValueError):
    """Raised when inputs violate a documented precondition."""


class DivergenceError(RuntimeError):
    """Raised when critic training produces a non-finite loss."""


def as_matrix(name, x, cols=None, allow_empty=False):
    """Coerce to a finite 2-D float64 array, optionally pinning the column count."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ValidationError(f"{name}: expected a 2-D array, got ndim={arr.ndim}")
    if not allow_empty and arr.shape[0] == 0:
        raise ValidationError(f"{name}: empty (no rows)")
    if cols is not None and arr.shape[1] != cols:
        raise ValidationError(f"{name}: expected {cols} columns, got {arr.shape[1]}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name}: contains NaN/Inf entries")
    return arr


def as_vector(name, x, length=None):
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise ValidationError(f"{name}: expected a 1-D array, got ndim={arr.ndim}")
    if length is not None and arr.shape[0] != length:
        raise ValidationError(f"{name}: expected length {length}, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name}: contains NaN/Inf entries")
    return arr


def as_labels(name, y, n_classes=None, length=None):
    """Coerce to an int64 label vector, checking the [0, n_classes) range."""
    arr = np.asarray(y)
    if arr.ndim != 1:
        raise ValidationError(f"{name}: expected a 1-D label vector, got ndim={arr.ndim}")
    if arr.size and not np.all(np.equal(np.mod(arr, 1), 0)):
        raise ValidationError(f"{name}: labels must be integers")
    arr = arr.astype(np.int64)
    if length is not None and arr.shape[0] != length:
        raise ValidationError(f"{name}: expected length {length}, got {arr.shape[0]}")
    if arr.size and n_classes is not None:
        lo, hi = int(arr.min()), int(arr.max())
        if lo < 0 or hi >= n_classes:
            raise ValidationError(
                f"{name}: labels must lie in [0, {n_classes}), found range [{lo}, {hi}]"
            )
    return arr


def check_class_id(name, y, n_classes):
    y = int(y)
    if not 0 <= y < n_classes:
        raise ValidationError(f"{name}: class id {y} outside [0, {n_classes})")
    return y


def check_fraction(name, value, low=0.0, high=1.0):
    value = float(value)
    if not low < value < high:
        raise ValidationError(f"{name}: must lie in ({low}, {high}), got {value}")
    return value


def check_positive(name, value):
    value = float(value)
    if not value > 0 or not np.isfinite(value):
        raise ValidationError(f"{name}: must be a positive finite number, got {value}")
    return value


def check_positive_int(name, value):
    ivalue = int(value)
    if ivalue != value or ivalue < 1:
        raise ValidationError(f"{name}: must be a positive integer, got {value}")
    return ivalue
