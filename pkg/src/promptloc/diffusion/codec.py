"""Exactly invertible latent codec: space-to-depth followed by a signed channel permutation."""

from __future__ import annotations

import numpy as np

FACTOR = 4
IMAGE_SHAPE = (3, 64, 64)
LATENT_CHANNELS = 3 * FACTOR * FACTOR


def _mix(seed=0):
    rng = np.random.default_rng(seed)
    perm = rng.permutation(LATENT_CHANNELS)
    signs = np.where(rng.random(LATENT_CHANNELS) < 0.5, -1.0, 1.0).astype(np.float32)
    return perm, signs


_PERM, _SIGNS = _mix()
_INV = np.argsort(_PERM)


def _check(x, shape, what):
    if x.shape[-3:] != shape:
        raise ValueError(f"{what} must end in shape {shape}, got {x.shape}")


def encode_image(image: np.ndarray) -> np.ndarray:
    """[..., 3, 64, 64] image in [-1, 1] -> [..., 48, 16, 16] latent."""
    image = np.asarray(image, dtype=np.float32)
    _check(image, IMAGE_SHAPE, "image")
    *lead, c, h, w = image.shape
    s2d = image.reshape(*lead, c, h // FACTOR, FACTOR, w // FACTOR, FACTOR)
    n = len(lead)
    s2d = s2d.transpose(*range(n), n, n + 2, n + 4, n + 1, n + 3)
    s2d = s2d.reshape(*lead, LATENT_CHANNELS, h // FACTOR, w // FACTOR)
    return s2d[..., _PERM, :, :] * _SIGNS[:, None, None]


def decode_latent(z: np.ndarray) -> np.ndarray:
    """Exact inverse of :func:`encode_image`."""
    z = np.asarray(z, dtype=np.float32)
    _check(z, (LATENT_CHANNELS, IMAGE_SHAPE[1] // FACTOR, IMAGE_SHAPE[2] // FACTOR), "latent")
    *lead, _, hl, wl = z.shape
    s2d = (z * _SIGNS[:, None, None])[..., _INV, :, :]
    n = len(lead)
    s2d = s2d.reshape(*lead, 3, FACTOR, FACTOR, hl, wl)
    s2d = s2d.transpose(*range(n), n, n + 3, n + 1, n + 4, n + 2)
    return s2d.reshape(*lead, 3, hl * FACTOR, wl * FACTOR)


def hwc_to_chw(images):
    return np.moveaxis(np.asarray(images), -1, -3)
