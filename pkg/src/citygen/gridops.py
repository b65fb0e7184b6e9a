"""Small grid primitives shared across modules: boundaries, dilation, resizing."""
from __future__ import annotations

import numpy as np
from scipy import ndimage

from .errors import ConfigurationError


def class_boundary_mask(grid: np.ndarray) -> np.ndarray:
    """Boolean mask of pixels with any 4-neighbor of a different class."""
    grid = np.asarray(grid)
    out = np.zeros(grid.shape, dtype=bool)
    out[:-1, :] |= grid[:-1, :] != grid[1:, :]
    out[1:, :] |= grid[1:, :] != grid[:-1, :]
    out[:, :-1] |= grid[:, :-1] != grid[:, 1:]
    out[:, 1:] |= grid[:, 1:] != grid[:, :-1]
    return out


def dilate_chebyshev(mask: np.ndarray, radius: int) -> np.ndarray:
    """Grow a boolean mask to all pixels within Chebyshev distance `radius`."""
    if radius < 0:
        raise ConfigurationError("dilation radius must be >= 0")
    mask = np.asarray(mask, dtype=bool)
    if radius == 0 or not mask.any():
        return mask.copy()
    size = 2 * radius + 1
    return ndimage.maximum_filter(mask, size=size, mode="constant", cval=False)


def resize_nearest(grid: np.ndarray, out_shape: tuple[int, int]) -> np.ndarray:
    """Nearest-neighbor resize of a 2-D array to `out_shape`.

    For integer upsample factors this replicates each source pixel factor x
    factor; for integer downsample factors it picks the center sample of each
    block.
    """
    grid = np.asarray(grid)
    h, w = grid.shape
    oh, ow = out_shape
    if oh < 1 or ow < 1:
        raise ConfigurationError(f"bad resize target {out_shape}")
    rows = np.minimum((np.floor((np.arange(oh) + 0.5) * h / oh)).astype(np.int64), h - 1)
    cols = np.minimum((np.floor((np.arange(ow) + 0.5) * w / ow)).astype(np.int64), w - 1)
    return grid[np.ix_(rows, cols)]
