"""Line-delimited JSON dataset manifests.

Line 1 is a header object; every following line is one record with fields in
this order: image_id, path, split, category_id, category, boxes, caption.
Boxes are [x_min, y_min, x_max, y_max] in pixels, max exclusive.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

SCHEMA = "promptloc-manifest"
SCHEMA_VERSION = 1
FIELDS = ("image_id", "path", "split", "category_id", "category", "boxes", "caption")


class ManifestError(ValueError):
    pass


class ManifestVersionError(ManifestError):
    pass


@dataclass
class Record:
    image_id: str
    path: str
    split: str
    category_id: int
    category: str
    boxes: list
    caption: str

    def to_json(self):
        return json.dumps({k: getattr(self, k) for k in FIELDS})


@dataclass
class DatasetManifest:
    records: list
    categories: list
    image_size: int = 64
    seed: int = 0
    config_hash: str = ""
    root: Path = field(default=None, compare=False)

    def split(self, name):
        return [r for r in self.records if r.split == name]

    def by_id(self):
        return {r.image_id: r for r in self.records}

    def load_images(self, records):
        """uint8 [N, H, W, 3] for the given records."""
        root = Path(self.root) if self.root is not None else Path(".")
        return np.stack([np.asarray(Image.open(root / r.path).convert("RGB")) for r in records])

    def validate(self):
        S = self.image_size
        for r in self.records:
            _check_record(r, S, len(self.categories))
        for split in {r.split for r in self.records}:
            present = {r.category_id for r in self.records if r.split == split}
            missing = set(range(len(self.categories))) - present
            if missing:
                raise ManifestError(f"split {split!r} has no records for categories {sorted(missing)}")


def _check_record(r, S, K):
    if r.split not in ("train", "test"):
        raise ManifestError(f"{r.image_id}: unknown split {r.split!r}")
    if not 0 <= r.category_id < K:
        raise ManifestError(f"{r.image_id}: category id {r.category_id} out of range")
    if not r.boxes:
        raise ManifestError(f"{r.image_id}: no ground-truth boxes")
    for b in r.boxes:
        if len(b) != 4:
            raise ManifestError(f"{r.image_id}: box {b} must have 4 coordinates")
        x0, y0, x1, y1 = b
        if not (0 <= x0 < x1 <= S and 0 <= y0 < y1 <= S):
            raise ManifestError(f"{r.image_id}: box {b} outside the {S}x{S} image")


def save_manifest(manifest: DatasetManifest, path):
    path = Path(path)
    header = {
        "schema": SCHEMA,
        "version": SCHEMA_VERSION,
        "categories": list(manifest.categories),
        "image_size": manifest.image_size,
        "seed": manifest.seed,
        "config_hash": manifest.config_hash,
        "fields": list(FIELDS),
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header) + "\n")
        for r in manifest.records:
            fh.write(r.to_json() + "\n")


def load_manifest(path) -> DatasetManifest:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ManifestError(f"{path}: empty manifest")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as e:
        raise ManifestError(f"{path}:1: malformed header ({e.msg})") from None
    if header.get("schema") != SCHEMA:
        raise ManifestError(f"{path}:1: not a {SCHEMA} file")
    if header.get("version") != SCHEMA_VERSION:
        raise ManifestVersionError(
            f"{path}: manifest schema version {header.get('version')} is not supported (expected {SCHEMA_VERSION})"
        )
    S = int(header["image_size"])
    K = len(header["categories"])
    records = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            d = json.loads(line)
            rec = Record(**{k: d[k] for k in FIELDS})
            rec.category_id = int(rec.category_id)
            rec.boxes = [[int(v) for v in b] for b in rec.boxes]
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
            raise ManifestError(f"{path}:{lineno}: malformed record ({e})") from None
        try:
            _check_record(rec, S, K)
        except ManifestError as e:
            raise ManifestError(f"{path}:{lineno}: {e}") from None
        records.append(rec)
    return DatasetManifest(
        records=records,
        categories=list(header["categories"]),
        image_size=S,
        seed=header.get("seed", 0),
        config_hash=header.get("config_hash", ""),
        root=path.parent,
    )


def to_model_images(pixels: np.ndarray) -> np.ndarray:
    """uint8 HWC -> float32 HWC in [-1, 1]."""
    return (np.asarray(pixels, dtype=np.float32) / 127.5 - 1.0).astype(np.float32)
