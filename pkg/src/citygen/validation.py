"""Input validation helpers used across the package.

Follow the scikit-learn convention: each helper either returns a normalized
array or raises, so callers can trust shapes and dtypes afterwards.
"""
from __future__ import annotations

import numpy as np

from .errors import ConfigurationError, DataError


def as_class_grid(grid, n_classes: int | None = None) -> np.ndarray:
    """Coerce to a 2-D int32 grid of class ids, optionally range-checked."""
    arr = np.asarray(grid)
    if arr.ndim != 2 or arr.size == 0:
        raise DataError(f"expected a nonempty H x W grid, got shape {arr.shape}")
    if not np.issubdtype(arr.dtype, np.integer):
        if not np.all(arr == np.round(arr)):
            raise DataError("class grid contains non-integer values")
    arr = arr.astype(np.int32, copy=False)
    if n_classes is not None:
        lo, hi = int(arr.min()), int(arr.max())
        if lo < 0 or hi >= n_classes:
            raise DataError(
                f"class ids must lie in [0, {n_classes - 1}], got range [{lo}, {hi}]"
            )
    return arr


def as_mask(mask, shape: tuple[int, int] | None = None) -> np.ndarray:
    """Coerce to a 2-D uint8 mask with values in {0, 1} (1 = known)."""
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise DataError(f"mask must be 2-D, got shape {arr.shape}")
    if arr.dtype == bool:
        arr = arr.astype(np.uint8)
    if not np.isin(arr, (0, 1)).all():
        raise DataError("mask values must be 0 or 1")
    if shape is not None and arr.shape != tuple(shape):
        raise DataError(f"mask shape {arr.shape} does not match field shape {tuple(shape)}")
    return arr.astype(np.uint8, copy=False)


def as_rgb_raster(raster) -> np.ndarray:
    """Coerce to an H x W x 3 float array with values in [0, 255]."""
    arr = np.asarray(raster, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise DataError(f"expected an H x W x 3 raster, got shape {arr.shape}")
    if arr.size == 0:
        raise DataError("raster is empty")
    if arr.min() < 0 or arr.max() > 255:
        raise DataError("raster values must lie in [0, 255]")
    return arr


def check_finite(arr, what: str = "array") -> np.ndarray:
    arr = np.asarray(arr)
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{what} contains non-finite values")
    return arr


def check_same_shape(a, b, what: str = "arrays") -> None:
    if np.shape(a) != np.shape(b):
        raise DataError(f"{what} have mismatched shapes {np.shape(a)} vs {np.shape(b)}")


def check_positive(value: float, name: str) -> float:
    if not value > 0:
        raise ConfigurationError(f"{name} must be positive, got {value!r}")
    return value
