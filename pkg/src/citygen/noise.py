"""Seeded 2-D gradient noise in [-1, 1] for natural-surface elevation.

Classic lattice gradient noise (smooth, deterministic per seed). Only range,
smoothness, and determinism matter to callers; the exact flavor does not.
"""
from __future__ import annotations

import numpy as np

_TABLE = 256


def _fade(t: np.ndarray) -> np.ndarray:
    return t * t * t * (t * (t * 6.0 - 15.0) + 10.0)


def smooth_noise_2d(shape: tuple, frequency: float, seed: int) -> np.ndarray:
    """Evaluate gradient noise on an H x W pixel grid at the given frequency
    (lattice cells per pixel). Values lie in [-1, 1].
    """
    h, w = shape
    rng = np.random.default_rng(seed & 0xFFFFFFFFFFFFFFFF)
    perm = rng.permutation(_TABLE)
    perm = np.concatenate([perm, perm])
    angles = rng.uniform(0.0, 2.0 * np.pi, _TABLE)
    gx_table, gy_table = np.cos(angles), np.sin(angles)

    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    xs *= frequency
    ys *= frequency
    xi = np.floor(xs).astype(np.int64)
    yi = np.floor(ys).astype(np.int64)
    xf = xs - xi
    yf = ys - yi

    def grad_dot(ix, iy, dx, dy):
        idx = perm[(perm[ix & (_TABLE - 1)] + iy) & (_TABLE - 1)]
        return gx_table[idx] * dx + gy_table[idx] * dy

    n00 = grad_dot(xi, yi, xf, yf)
    n10 = grad_dot(xi + 1, yi, xf - 1.0, yf)
    n01 = grad_dot(xi, yi + 1, xf, yf - 1.0)
    n11 = grad_dot(xi + 1, yi + 1, xf - 1.0, yf - 1.0)

    u, v = _fade(xf), _fade(yf)
    nx0 = n00 + u * (n10 - n00)
    nx1 = n01 + u * (n11 - n01)
    value = nx0 + v * (nx1 - nx0)
    # unit gradients bound |value| by sqrt(2)/2; rescale to fill [-1, 1]
    return np.clip(value * np.sqrt(2.0), -1.0, 1.0)
