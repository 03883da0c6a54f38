"""Input checks for the estimator API."""

from __future__ import annotations

import numpy as np

IMAGE_SIZE = 64


def check_images(X, image_size=IMAGE_SIZE):
    """Accept uint8 images in 0..255 or floats in [-1, 1]; return float32 [N, S, S, 3] in [-1, 1]."""
    X = np.asarray(X)
    if X.ndim == 3:
        X = X[None]
    if X.ndim != 4 or X.shape[1:] != (image_size, image_size, 3):
        raise ValueError(f"images must be [N, {image_size}, {image_size}, 3], got {X.shape}")
    if X.shape[0] == 0:
        raise ValueError("no images given")
    if X.dtype == np.uint8:
        return (X.astype(np.float32) / 127.5 - 1.0).astype(np.float32)
    if not np.issubdtype(X.dtype, np.floating):
        raise ValueError(f"images must be uint8 or floating point, got {X.dtype}")
    if not np.all(np.isfinite(X)):
        raise ValueError("images contain non-finite values")
    if X.min() < -1.0 - 1e-6 or X.max() > 1.0 + 1e-6:
        raise ValueError("floating-point images must lie in [-1, 1]")
    return X.astype(np.float32)


def check_labels(y, n, n_classes):
    y = np.asarray(y)
    if y.shape != (n,):
        raise ValueError(f"labels must have shape ({n},), got {y.shape}")
    if not np.issubdtype(y.dtype, np.integer):
        raise ValueError("labels must be integers")
    if y.min() < 0 or y.max() >= n_classes:
        raise ValueError(f"labels must lie in 0..{n_classes - 1}")
    return y.astype(np.int64)
