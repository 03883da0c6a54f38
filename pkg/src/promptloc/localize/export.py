"""File formats for activation maps and predictions."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..metrics import Prediction

GRID_MAGIC = "PLMAP1"


class MapFormatError(ValueError):
    pass


def write_map_grid(grid, path):
    """ASCII header ``PLMAP1 <width> <height>\\n`` then row-major little-endian float32."""
    grid = np.asarray(grid, dtype="<f4")
    if grid.ndim != 2:
        raise ValueError("map must be 2-D")
    h, w = grid.shape
    with open(path, "wb") as fh:
        fh.write(f"{GRID_MAGIC} {w} {h}\n".encode("ascii"))
        fh.write(grid.tobytes(order="C"))


def read_map_grid(path):
    raw = Path(path).read_bytes()
    end = raw.find(b"\n")
    parts = raw[:end].decode("ascii", errors="replace").split() if end > 0 else []
    if len(parts) != 3 or parts[0] != GRID_MAGIC:
        raise MapFormatError(f"{path}: not a {GRID_MAGIC} file")
    w, h = int(parts[1]), int(parts[2])
    body = raw[end + 1 :]
    if len(body) != 4 * w * h:
        raise MapFormatError(f"{path}: expected {4 * w * h} payload bytes, found {len(body)}")
    return np.frombuffer(body, dtype="<f4").reshape(h, w).astype(np.float32)


def write_pgm(grid, path, scale=1):
    """8-bit binary PGM of a map in [0, 1], each cell repeated ``scale`` times."""
    grid = np.clip(np.asarray(grid, dtype=np.float64), 0.0, 1.0)
    if scale > 1:
        grid = np.kron(grid, np.ones((scale, scale)))
    pixels = np.round(grid * 255).astype(np.uint8)
    h, w = pixels.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())


def write_predictions(rows, path):
    """One JSON object per line: image_id, category, ranked, box, gt_class_box, flags."""
    with open(path, "w", encoding="utf-8") as fh:
        for r in rows:
            fh.write(json.dumps(r) + "\n")


def read_predictions(path):
    preds = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
                preds.append(Prediction(d["image_id"], list(d["ranked"]), tuple(d["box"]), tuple(d["gt_class_box"])))
            except (json.JSONDecodeError, KeyError, TypeError) as e:
                raise MapFormatError(f"{path}:{lineno}: malformed prediction ({e})") from None
    return preds
