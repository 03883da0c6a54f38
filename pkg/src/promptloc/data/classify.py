"""Zero-shot classifier on the contrastive dual encoder."""

from __future__ import annotations

import numpy as np

from ..text.vocab import DEFAULT_TEMPLATE, category_names, fill_template


class UntrainedEncoderError(RuntimeError):
    pass


def category_text_features(dual, categories, template=DEFAULT_TEMPLATE):
    """[K, D] unit text features of the caption prompt for each category."""
    prompts = [fill_template(template, category_names(c)[0]) for c in categories]
    ids = np.stack([dual.vocab.tokenize(p) for p in prompts])
    return dual.text_features(ids).data


def similarity_scores(images, dual, categories, batch_size=64):
    """[N, K] cosine similarities between images (HWC, [-1, 1]) and categories."""
    if not getattr(dual, "trained", False):
        raise UntrainedEncoderError("the dual encoder has not been pretrained")
    text = category_text_features(dual, categories)
    images = np.asarray(images, dtype=np.float32)
    out = [dual.image_features(images[i : i + batch_size]).data @ text.T for i in range(0, len(images), batch_size)]
    return np.concatenate(out) if out else np.zeros((0, len(categories)), dtype=np.float32)


def rank_scores(scores, k=5):
    """Top-k column indices per row, best first; ties keep the lower index."""
    scores = np.asarray(scores)
    order = np.argsort(-scores, axis=1, kind="stable")
    return order[:, : min(k, scores.shape[1])]


def classify(images, dual, categories, k=5):
    """Ranked top-k category ids for each image."""
    return rank_scores(similarity_scores(images, dual, categories), k)
