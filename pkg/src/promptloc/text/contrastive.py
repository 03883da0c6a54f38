"""Symmetric InfoNCE pretraining of the text/image dual encoder."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from ..numerics import AdamW, Tensor, backward, ops, record
from .encoder import ImageEncoder, TextEncoder, embed_tokens, l2_normalize
from .vocab import TEMPLATES, Vocab, category_names, fill_template

log = logging.getLogger(__name__)


@dataclass
class ContrastiveConfig:
    steps: int = 600
    lr: float = 1e-3
    weight_decay: float = 0.0
    init_logit_scale: float = 10.0
    hflip: bool = True


class DualEncoder:
    """Bundles the vocab, text encoder, image encoder and the logit scale."""

    def __init__(self, vocab: Vocab, text: TextEncoder, image: ImageEncoder, log_scale=math.log(10.0)):
        self.vocab = vocab
        self.text = text
        self.image = image
        self.log_scale = Tensor(np.array(log_scale), requires_grad=True)
        self.trained = False

    def text_features(self, ids, table=None):
        ids = np.atleast_2d(ids)
        table = Tensor(self.vocab.embeddings) if table is None else table
        hidden = self.text(embed_tokens(ids, table))
        ends = [self.vocab.end_position(row) for row in ids]
        return l2_normalize(self.text.pool(hidden, ends))

    def image_features(self, images):
        return l2_normalize(self.image(Tensor(images)))


def contrastive_loss(img_feats, txt_feats, log_scale):
    """Returns (total, image->text, text->image); total is the mean of the two."""
    logits = ops.matmul(img_feats, ops.transpose(txt_feats, (1, 0))) * ops.exp(log_scale)
    targets = np.arange(logits.shape[0])
    i2t = ops.cross_entropy(logits, targets)
    t2i = ops.cross_entropy(ops.transpose(logits, (1, 0)), targets)
    return (i2t + t2i) * 0.5, i2t, t2i


def sample_caption(category, rng, templates=TEMPLATES):
    names = category_names(category)
    return fill_template(templates[rng.integers(len(templates))], names[rng.integers(len(names))])


def contrastive_pretrain(images, labels, categories, dual: DualEncoder, config: ContrastiveConfig, seed=0, on_step=None):
    """Train ``dual`` in place on (image, caption) pairs and mark it trained.

    Each batch holds one image per category, so the in-batch negatives are
    always other categories. Returns the per-step loss trace.
    """
    if len(categories) < 2:
        raise ValueError("contrastive pretraining needs at least 2 categories")
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    by_cat = [np.flatnonzero(labels == k) for k in range(len(categories))]
    if any(len(ix) == 0 for ix in by_cat):
        raise ValueError("every category needs at least one training image")

    table = Tensor(dual.vocab.embeddings, requires_grad=True)
    dual.text.unfreeze()
    dual.image.unfreeze()
    params = [table, dual.log_scale] + dual.text.parameters() + dual.image.parameters()
    opt = AdamW(params, lr=config.lr, weight_decay=config.weight_decay)
    trace = []
    for step in range(config.steps):
        idx = np.array([ix[rng.integers(len(ix))] for ix in by_cat])
        batch = images[idx]
        if config.hflip:
            flip = rng.random(len(idx)) < 0.5
            batch = np.where(flip[:, None, None, None], batch[:, :, ::-1], batch)
        ids = np.stack([dual.vocab.tokenize(sample_caption(c, rng)) for c in categories])
        opt.zero_grad()
        with record():
            loss, i2t, t2i = contrastive_loss(
                dual.image_features(batch), dual.text_features(ids, table), dual.log_scale
            )
        backward(loss, params=params)
        opt.step()
        trace.append((float(loss.data), float(i2t.data), float(t2i.data)))
        if on_step is not None:
            on_step(step, trace[-1][0])
    dual.vocab.embeddings = table.data.astype(np.float32)
    dual.text.freeze()
    dual.image.freeze()
    dual.trained = True
    return trace
