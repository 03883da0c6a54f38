"""Linear-beta noise schedule and the closed-form forward noising step."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..numerics import ops


@dataclass(frozen=True)
class NoiseSchedule:
    T: int
    beta_start: float
    beta_end: float
    alphabar: np.ndarray  # alphabar[t - 1] for t = 1..T, float64

    def at(self, t):
        """alphabar_t for integer t (array-like allowed); t = 0 gives 1."""
        t = np.asarray(t)
        if np.any(t < 0) or np.any(t > self.T):
            raise ValueError(f"timestep outside 0..{self.T}")
        padded = np.concatenate([[1.0], self.alphabar])
        return padded[t]

    def to_dict(self):
        return {"T": self.T, "beta_start": self.beta_start, "beta_end": self.beta_end}


def make_schedule(T=1000, beta_start=1e-4, beta_end=0.02) -> NoiseSchedule:
    if T < 1:
        raise ValueError("T must be >= 1")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ValueError("need 0 < beta_start <= beta_end < 1")
    betas = np.linspace(beta_start, beta_end, T, dtype=np.float64)
    return NoiseSchedule(T, beta_start, beta_end, np.cumprod(1.0 - betas))


def add_noise(z0, t, eps, schedule: NoiseSchedule):
    """z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) eps.

    ``t`` is a scalar or one timestep per leading batch item; t = 0 returns z0.
    """
    z0 = np.asarray(z0)
    eps = np.asarray(eps)
    if z0.shape != eps.shape:
        raise ValueError(f"noise shape {eps.shape} != latent shape {z0.shape}")
    ab = schedule.at(t)
    a = np.sqrt(ab).astype(z0.dtype)
    b = np.sqrt(1.0 - ab).astype(z0.dtype)
    if np.ndim(t) > 0:
        extra = (1,) * (z0.ndim - 1)
        a = a.reshape(-1, *extra)
        b = b.reshape(-1, *extra)
    return a * z0 + b * eps


def denoising_loss(pred, eps):
    """Mean squared error between predicted and true noise."""
    if tuple(pred.shape) != tuple(eps.shape):
        raise ValueError(f"shape mismatch: {pred.shape} vs {eps.shape}")
    return ops.mse(pred, eps)
