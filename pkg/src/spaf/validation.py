"""Input validation helpers shared by the library and the estimators."""

from __future__ import annotations

import numpy as np

__all__ = ["as_matrix", "as_vector", "require_finite", "nonzero_count"]


def require_finite(arr: np.ndarray, name: str) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf entries")
    return arr


def as_matrix(M, name: str = "M") -> np.ndarray:
    """Coerce to a finite 2-D float64 array."""
    out = np.asarray(M, dtype=float)
    if out.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got ndim={out.ndim}")
    if out.size == 0:
        raise ValueError(f"{name} must be nonempty")
    return require_finite(out, name)


def as_vector(v, length: int | None = None, name: str = "vector") -> np.ndarray:
    """Coerce to a finite 1-D float64 array, optionally of fixed length."""
    out = np.asarray(v, dtype=float)
    if out.ndim != 1:
        raise ValueError(f"{name} must be 1-dimensional, got ndim={out.ndim}")
    if length is not None and out.size != length:
        raise ValueError(f"{name} must have length {length}, got {out.size}")
    return require_finite(out, name)


def nonzero_count(v: np.ndarray) -> int:
    # exact-zero counting: entries equal to 0.0 are the only zeros
    return int(np.count_nonzero(v))
