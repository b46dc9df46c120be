"""Small input-validation helpers shared across the package."""

from __future__ import annotations

import numpy as np


def check_features(X, name: str = "X") -> np.ndarray:
    """Coerce to a 2-D float64 array and require finite entries."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {X.shape}")
    if X.shape[0] == 0:
        raise ValueError(f"{name} must contain at least one row")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains non-finite values")
    return X


def check_labels(y, n_rows: int, num_classes: int | None = None, name: str = "y") -> np.ndarray:
    """Coerce to a 1-D int64 array aligned with X and bounded by num_classes."""
    y = np.asarray(y)
    if y.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {y.shape}")
    if y.shape[0] != n_rows:
        raise ValueError(f"{name} has {y.shape[0]} entries, expected {n_rows}")
    if not np.issubdtype(y.dtype, np.integer):
        rounded = np.rint(np.asarray(y, dtype=np.float64))
        if not np.array_equal(rounded, np.asarray(y, dtype=np.float64)):
            raise ValueError(f"{name} must contain integer class labels")
        y = rounded
    y = y.astype(np.int64)
    if y.size and y.min() < 0:
        raise ValueError(f"{name} contains negative labels")
    if num_classes is not None and y.size and y.max() >= num_classes:
        raise ValueError(f"{name} contains label {y.max()} >= num_classes {num_classes}")
    return y


def check_fraction(value: float, name: str, *, allow_zero: bool = False, allow_one: bool = True) -> float:
    value = float(value)
    low_ok = value > 0.0 or (allow_zero and value == 0.0)
    high_ok = value < 1.0 or (allow_one and value == 1.0)
    if not (low_ok and high_ok):
        raise ValueError(f"{name} must be in the unit interval, got {value}")
    return value


def check_positive_int(value, name: str) -> int:
    ivalue = int(value)
    if ivalue != value or ivalue <= 0:
        raise ValueError(f"{name} must be a positive integer, got {value!r}")
    return ivalue
