"""Embedding combination, multi-map aggregation and map-to-box conversion."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage


class DegenerateMapError(ValueError):
    pass


@dataclass
class ActivationMap:
    values: np.ndarray  # [h, w], max 1
    sources: list = field(default_factory=list)  # (layer, timestep) pairs


@dataclass
class BoundingBox:
    x_min: int
    y_min: int
    x_max: int
    y_max: int
    fallback: bool = False  # no pixel passed the threshold; box is the argmax cell

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(f"invalid box {self.as_tuple()}")

    def as_tuple(self):
        return (self.x_min, self.y_min, self.x_max, self.y_max)


def combine_embeddings(f_d, f_r, w):
    """w * f_r + (1 - w) * f_d.

    The endpoints return the inputs themselves so w=0 and w=1 are exact.
    """
    if not 0.0 <= w <= 1.0:
        raise ValueError(f"combination weight {w} outside [0, 1]")
    f_d = np.asarray(f_d)
    f_r = np.asarray(f_r)
    if f_d.shape != f_r.shape:
        raise ValueError(f"embedding shapes differ: {f_d.shape} vs {f_r.shape}")
    if w == 0.0:
        return f_d.copy()
    if w == 1.0:
        return f_r.copy()
    return (w * f_r + (1.0 - w) * f_d).astype(f_d.dtype)


def _interp_matrix(n_in, n_out):
    """Half-pixel-centred linear interpolation weights, edges clamped."""
    m = np.zeros((n_out, n_in))
    scale = n_in / n_out
    for i in range(n_out):
        src = min(max((i + 0.5) * scale - 0.5, 0.0), n_in - 1)
        lo = int(np.floor(src))
        hi = min(lo + 1, n_in - 1)
        frac = src - lo
        m[i, lo] += 1.0 - frac
        m[i, hi] += frac
    return m


def resize_bilinear(grid, shape):
    grid = np.asarray(grid, dtype=np.float64)
    if grid.shape == tuple(shape):
        return grid
    rows = _interp_matrix(grid.shape[0], shape[0])
    cols = _interp_matrix(grid.shape[1], shape[1])
    return rows @ grid @ cols.T


def aggregate(maps, renormalize=True):
    """Average of per-map max-normalized maps on the finest grid present.

    Each map is divided by its own global maximum, bilinearly resized to the
    largest resolution among the inputs, then the maps are averaged; the
    average is finally rescaled to max 1 unless ``renormalize`` is False.
    """
    maps = [np.asarray(m, dtype=np.float64) for m in maps]
    if not maps:
        raise ValueError("aggregate needs at least one map")
    target = max((m.shape for m in maps), key=lambda s: s[0] * s[1])
    acc = np.zeros(target)
    for m in maps:
        peak = m.max()
        if not peak > 0:
            raise DegenerateMapError("attention map has no positive mass")
        acc += resize_bilinear(m / peak, target)
    acc /= len(maps)
    if renormalize:
        acc /= acc.max()
    return acc


def map_to_bbox(M, tau, image_size) -> BoundingBox:
    """Box around the largest 8-connected component of ``M >= tau``.

    Grid cells map to pixels with corner alignment: cell (r, c) of an h x w
    grid covers x in [c*W/w, (c+1)*W/w) and y in [r*H/h, (r+1)*H/h).
    """
    if not 0.0 < tau < 1.0:
        raise ValueError(f"threshold {tau} outside (0, 1)")
    M = np.asarray(M)
    h, w = M.shape
    H, W = (image_size, image_size) if np.isscalar(image_size) else image_size
    fg = M >= tau
    fallback = False
    if fg.any():
        labels, n = ndimage.label(fg, structure=np.ones((3, 3), dtype=int))
        sizes = np.bincount(labels.ravel())[1:]
        # ties go to the lowest label (first in raster order)
        ys, xs = np.nonzero(labels == int(np.argmax(sizes)) + 1)
    else:
        fallback = True
        r, c = np.unravel_index(int(np.argmax(M)), M.shape)
        ys, xs = np.array([r]), np.array([c])
    sx, sy = W / w, H / h
    return BoundingBox(
        int(round(xs.min() * sx)),
        int(round(ys.min() * sy)),
        int(round((xs.max() + 1) * sx)),
        int(round((ys.max() + 1) * sy)),
        fallback=fallback,
    )
