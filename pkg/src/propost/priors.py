"""Axis-aligned Gaussian prior shared by the particle sampler and MALA."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True)
class GaussianPrior:
    mean: tuple
    scale: tuple

    def __post_init__(self):
        if len(self.mean) != len(self.scale):
            raise ConfigurationError("prior mean and scale must have equal length")
        if any(not s > 0 for s in self.scale):
            raise ConfigurationError(f"prior scales must be positive, got {self.scale}")

    @staticmethod
    def standard(dim: int) -> "GaussianPrior":
        return GaussianPrior(mean=(0.0,) * dim, scale=(1.0,) * dim)

    @property
    def dim(self) -> int:
        return len(self.mean)

    def _arrays(self):
        return np.asarray(self.mean, dtype=float), np.asarray(self.scale, dtype=float)

    def log_density(self, theta: np.ndarray) -> float:
        mu, s = self._arrays()
        z = (np.asarray(theta, dtype=float) - mu) / s
        return float(-0.5 * np.sum(z**2) - np.sum(np.log(s)) - 0.5 * len(s) * np.log(2 * np.pi))

    def grad_log_density(self, theta: np.ndarray) -> np.ndarray:
        mu, s = self._arrays()
        return -(np.asarray(theta, dtype=float) - mu) / s**2

    def grad_log_density_rows(self, thetas: np.ndarray) -> np.ndarray:
        mu, s = self._arrays()
        return -(thetas - mu[None, :]) / (s**2)[None, :]

    def sample(self, count: int, rng: np.random.Generator) -> np.ndarray:
        mu, s = self._arrays()
        return mu[None, :] + s[None, :] * rng.standard_normal((count, len(s)))
