"""Classify-then-localize over a manifest split, producing evaluation rows."""

from __future__ import annotations

import numpy as np

from ..data.classify import classify
from ..data.manifest import to_model_images
from ..metrics import GroundTruth, Prediction
from .infer import LocalizeConfig, localize_many


def predict_records(pipeline, manifest, records, config: LocalizeConfig, workers=1, keep_maps=False):
    """One prediction row per record.

    The rank-1 class drives ``box``; ``gt_class_box`` always uses the true
    category, so misclassified images are localized twice.
    """
    images = to_model_images(manifest.load_images(records))
    ids = [r.image_id for r in records]
    ranked = classify(images, pipeline.dual, pipeline.categories)
    cats = pipeline.categories
    gt_results = localize_many(pipeline, images, [r.category for r in records], ids, config, workers)
    wrong = [i for i, r in enumerate(records) if ranked[i][0] != r.category_id]
    pred_results = dict(zip(wrong, localize_many(
        pipeline, images[wrong], [cats[ranked[i][0]] for i in wrong], [ids[i] for i in wrong], config, workers
    ))) if wrong else {}
    rows = []
    for i, r in enumerate(records):
        gt_box, gt_map = gt_results[i]
        box = pred_results[i][0] if i in pred_results else gt_box
        row = {
            "image_id": r.image_id,
            "category": r.category,
            "ranked": [int(k) for k in ranked[i]],
            "box": list(box.as_tuple()),
            "gt_class_box": list(gt_box.as_tuple()),
            "flags": {"fallback": bool(gt_box.fallback), "pred_fallback": bool(box.fallback)},
        }
        if keep_maps:
            row["map"] = gt_map
        rows.append(row)
    return rows


def rows_to_predictions(rows):
    return [Prediction(r["image_id"], r["ranked"], tuple(r["box"]), tuple(r["gt_class_box"])) for r in rows]


def ground_truth(records):
    return [GroundTruth(r.image_id, r.category_id, [tuple(b) for b in r.boxes]) for r in records]


def centered_box(image_size, area_fraction=0.5):
    """Fixed centered square covering ``area_fraction`` of the image."""
    side = image_size * np.sqrt(area_fraction)
    lo = int(round((image_size - side) / 2))
    hi = int(round((image_size + side) / 2))
    return (lo, lo, hi, hi)
