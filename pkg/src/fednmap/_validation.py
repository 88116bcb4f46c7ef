"""Input validation helpers shared by the library and the estimator facade."""

from __future__ import annotations

import numbers

import numpy as np


class DimensionMismatchError(ValueError):
    pass


def as_vector(x, dim: int | None = None, name: str = "x") -> np.ndarray:
    """Return ``x`` as a 1-D float64 array, optionally checking its length."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise DimensionMismatchError(f"{name} must be 1-D, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise DimensionMismatchError(f"{name} has length {arr.shape[0]}, expected {dim}")
    return arr


def check_same_shape(*arrays: np.ndarray, names: tuple[str, ...] = ()) -> None:
    shapes = {a.shape for a in arrays}
    if len(shapes) > 1:
        label = ", ".join(names) if names else "inputs"
        raise DimensionMismatchError(f"{label} have mismatched shapes {sorted(shapes)}")


def check_positive(value, name: str, strict: bool = True) -> float:
    if not isinstance(value, numbers.Real) or not np.isfinite(value):
        raise ValueError(f"{name} must be a finite real number, got {value!r}")
    if strict and value <= 0:
        raise ValueError(f"{name} must be > 0, got {value}")
    if not strict and value < 0:
        raise ValueError(f"{name} must be >= 0, got {value}")
    return float(value)


def check_count(value, name: str, minimum: int = 1) -> int:
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise ValueError(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_client(i, n: int) -> int:
    i = check_count(i, "client index", minimum=0)
    if i >= n:
        raise IndexError(f"client index {i} out of range for {n} clients")
    return i
