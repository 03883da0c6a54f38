"""Synthetic localization dataset: colored shapes on low-amplitude noise textures."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .manifest import DatasetManifest, Record

# category string -> (shape, base RGB in 0..1)
DEFAULT_CATEGORIES = {
    "red circle, crimson disc": ("circle", (0.85, 0.15, 0.15)),
    "blue circle, azure disc": ("circle", (0.15, 0.3, 0.9)),
    "green square, emerald tile": ("square", (0.15, 0.75, 0.2)),
    "orange square, amber tile": ("square", (0.95, 0.55, 0.1)),
    "yellow triangle, golden wedge": ("triangle", (0.92, 0.85, 0.15)),
    "purple triangle, violet wedge": ("triangle", (0.6, 0.2, 0.8)),
    "cyan ring, teal hoop": ("ring", (0.1, 0.8, 0.85)),
    "cross": ("cross", (0.95, 0.4, 0.75)),
}

SHAPES = ("circle", "square", "triangle", "ring", "cross", "diamond")


@dataclass
class SyntheticConfig:
    categories: dict = field(default_factory=lambda: dict(DEFAULT_CATEGORIES))
    image_size: int = 64
    train_per_category: int = 200
    test_per_category: int = 50
    min_size: int = 18
    max_size: int = 32
    distractor_rate: float = 0.2
    multi_instance_rate: float = 0.1
    texture_amplitude: float = 0.12
    color_jitter: float = 0.06

    def to_dict(self):
        d = asdict(self)
        d["categories"] = {k: [v[0], list(v[1])] for k, v in self.categories.items()}
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "categories" in d:
            d["categories"] = {k: (v[0], tuple(v[1])) for k, v in d["categories"].items()}
        return cls(**d)

    def hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def shape_mask(shape, size):
    """Boolean [size, size] mask whose tight bounding box is the full square."""
    yy, xx = np.mgrid[0:size, 0:size]
    c = (size - 1) / 2.0
    u = (xx - c) / max(c, 0.5)
    v = (yy - c) / max(c, 0.5)
    if shape == "circle":
        m = u * u + v * v <= 1.0
    elif shape == "square":
        m = np.ones((size, size), dtype=bool)
    elif shape == "ring":
        r = u * u + v * v
        m = (r <= 1.0) & (r >= 0.3)
    elif shape == "triangle":
        # apex at the top row, base along the bottom row
        m = np.abs(u) <= (yy / max(size - 1, 1))
    elif shape == "cross":
        m = (np.abs(u) <= 0.34) | (np.abs(v) <= 0.34)
    elif shape == "diamond":
        m = np.abs(u) + np.abs(v) <= 1.0
    else:
        raise ValueError(f"unknown shape {shape!r}")
    return m


def _texture(rng, size, amplitude):
    base = rng.uniform(0.35, 0.65, size=3)
    coarse = rng.normal(size=(size // 8 + 1, size // 8 + 1, 3))
    smooth = np.kron(coarse, np.ones((8, 8, 1)))[:size, :size]
    fine = rng.normal(size=(size, size, 3)) * 0.35
    return np.clip(base + amplitude * (smooth + fine) / 1.4, 0.0, 1.0)


def _place(rng, size, img_size, taken):
    for _ in range(50):
        x0 = int(rng.integers(0, img_size - size + 1))
        y0 = int(rng.integers(0, img_size - size + 1))
        box = (x0, y0, x0 + size, y0 + size)
        if all(box[0] >= b[2] + 1 or box[2] + 1 <= b[0] or box[1] >= b[3] + 1 or box[3] + 1 <= b[1] for b in taken):
            return box
    return None


def render_image(cfg: SyntheticConfig, category: str, rng):
    """Return (uint8 HWC image, list of GT boxes, distractor category or None)."""
    names = list(cfg.categories)
    S = cfg.image_size
    img = _texture(rng, S, cfg.texture_amplitude)
    objects = [(category, int(rng.integers(cfg.min_size, cfg.max_size + 1)))]
    if rng.random() < cfg.multi_instance_rate:
        objects.append((category, int(rng.integers(cfg.min_size, cfg.max_size + 1))))
    distractor = None
    if len(names) > 1 and rng.random() < cfg.distractor_rate:
        others = [n for n in names if n != category]
        distractor = others[int(rng.integers(len(others)))]
        objects.append((distractor, int(rng.integers(cfg.min_size * 2 // 3, cfg.min_size))))
    taken, gt = [], []
    for cat, size in objects:
        box = _place(rng, size, S, taken)
        if box is None:
            continue
        taken.append(box)
        shape, color = cfg.categories[cat]
        color = np.clip(np.asarray(color) + rng.normal(scale=cfg.color_jitter, size=3), 0, 1)
        m = shape_mask(shape, size)
        x0, y0, x1, y1 = box
        region = img[y0:y1, x0:x1]
        region[m] = color
        if cat == category:
            ys, xs = np.nonzero(m)
            gt.append([x0 + int(xs.min()), y0 + int(ys.min()), x0 + int(xs.max()) + 1, y0 + int(ys.max()) + 1])
    return (img * 255.0 + 0.5).astype(np.uint8), gt, distractor


def generate_synthetic(config: SyntheticConfig, seed: int, out_dir) -> DatasetManifest:
    """Render train/test images as PNG under ``out_dir`` and return the manifest.

    Per-image generators derive from (seed, split, category, index), so any
    single image can be regenerated independently.
    """
    names = list(config.categories)
    if len(names) < 2:
        raise ValueError("need at least 2 categories")
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    records = []
    for split, count in (("train", config.train_per_category), ("test", config.test_per_category)):
        split_code = 0 if split == "train" else 1
        for k, cat in enumerate(names):
            for i in range(count):
                rng = np.random.default_rng([seed, split_code, k, i])
                pixels, boxes, _ = render_image(config, cat, rng)
                image_id = f"{split}_{k:02d}_{i:04d}"
                rel = f"images/{image_id}.png"
                Image.fromarray(pixels, mode="RGB").save(out_dir / rel, optimize=False)
                caption = f"a photo of a {cat.split(',')[0].strip().lower()}"
                records.append(Record(image_id, rel, split, k, cat, boxes, caption))
    return DatasetManifest(
        records=records,
        categories=names,
        image_size=config.image_size,
        seed=seed,
        config_hash=config.hash(),
    )
