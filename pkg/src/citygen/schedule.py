"""DDPM noise schedule and forward (noising) process."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DataError
from .validation import check_same_shape

BETA_START = 1e-4
BETA_END = 0.02


@dataclass(frozen=True)
class NoiseSchedule:
    """Variance schedule over timesteps 1..T.

    Arrays are 0-indexed: betas[t-1] is the variance added at step t.
    alpha_bars is the cumulative product of (1 - beta), strictly decreasing.
    """

    betas: np.ndarray

    def __post_init__(self):
        betas = np.asarray(self.betas, dtype=np.float64)
        if betas.ndim != 1 or betas.size < 1:
            raise ConfigurationError("betas must be a nonempty 1-D array")
        if not ((betas > 0) & (betas < 1)).all():
            raise ConfigurationError("betas must lie in (0, 1)")
        betas.flags.writeable = False
        object.__setattr__(self, "betas", betas)

    @property
    def timesteps(self) -> int:
        return self.betas.size

    @property
    def alphas(self) -> np.ndarray:
        return 1.0 - self.betas

    @property
    def alpha_bars(self) -> np.ndarray:
        return np.cumprod(self.alphas)

    def alpha_bar(self, t: int) -> float:
        """Cumulative signal retention at timestep t (1-based)."""
        self._check_t(t)
        return float(self.alpha_bars[t - 1])

    def beta(self, t: int) -> float:
        self._check_t(t)
        return float(self.betas[t - 1])

    def _check_t(self, t: int) -> None:
        if not 1 <= t <= self.timesteps:
            raise ConfigurationError(f"timestep {t} outside 1..{self.timesteps}")


def make_schedule(timesteps: int, kind: str = "linear") -> NoiseSchedule:
    """Linear beta schedule from 1e-4 to 0.02 over `timesteps` steps."""
    if timesteps < 1:
        raise ConfigurationError(f"timesteps must be >= 1, got {timesteps}")
    if kind != "linear":
        raise ConfigurationError(f"unknown schedule kind {kind!r}")
    betas = np.linspace(BETA_START, BETA_END, timesteps)
    return NoiseSchedule(betas)


def forward_noise(s0, t: int, eps, sched: NoiseSchedule) -> np.ndarray:
    """Sample the forward marginal: s_t = sqrt(ab_t) * s0 + sqrt(1 - ab_t) * eps."""
    s0 = np.asarray(getattr(s0, "values", s0), dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    check_same_shape(s0, eps, "clean field and noise")
    ab = sched.alpha_bar(t)
    return np.sqrt(ab) * s0 + np.sqrt(1.0 - ab) * eps
