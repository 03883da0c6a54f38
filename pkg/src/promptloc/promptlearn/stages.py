"""Denoiser pretraining, concept-embedding learning and denoiser finetuning."""

from __future__ import annotations

import numpy as np

from ..diffusion.schedule import NoiseSchedule, add_noise, denoising_loss, make_schedule
from ..numerics import AdamW, Tensor, backward, ops, record
from ..text.encoder import encode_prompt
from .common import (
    MissingConceptError,
    TrainConfig,
    augment,
    caption_embeddings,
    ensemble_train_step,
    latents_of,
    prompt_embeddings,
    training_templates,
)


def _noised_batch(images, rng, config, schedule):
    """Augment, encode, draw (t, eps) per example and noise. Returns (z_t, t, eps)."""
    z0 = latents_of(augment(images, rng, config.hflip, config.color_jitter))
    t = rng.integers(1, schedule.T + 1, size=len(z0))
    eps = rng.standard_normal(z0.shape).astype(np.float32)
    return add_noise(z0, t, eps, schedule), t, eps


def _category_rows(labels, k):
    rows = np.flatnonzero(np.asarray(labels) == k)
    if len(rows) == 0:
        raise ValueError(f"category {k} has no training images")
    return rows


def pretrain_denoiser(images, labels, categories, vocab, encoder, unet, config: TrainConfig, schedule=None, log=None):
    """Train the U-Net from scratch on captioned images (stands in for a pretrained model).

    Captions are drawn uniformly from every template x synonym of the image's
    category, so the denoiser learns to read the category slot.
    """
    schedule = schedule or make_schedule()
    rng = np.random.default_rng([config.seed, 0])
    labels = np.asarray(labels)
    contexts = [caption_embeddings(c, vocab, encoder) for c in categories]
    unet.unfreeze()
    params = unet.parameters()
    opt = AdamW(params, lr=config.lr, weight_decay=config.weight_decay)
    trace = []
    for step in range(config.steps):
        idx = rng.integers(len(images), size=config.batch_size)
        zt, t, eps = _noised_batch(images[idx], rng, config, schedule)
        ctx = np.stack([contexts[k][rng.integers(len(contexts[k]))] for k in labels[idx]])
        opt.zero_grad()
        with record():
            loss = denoising_loss(unet(zt, t, ctx), Tensor(eps))
        backward(loss, params=params)
        opt.step()
        trace.append(float(loss.data))
        if log is not None:
            log(step=step, stage="pretrain", category=None, loss=trace[-1])
    unet.freeze()
    return trace


def learn_concept_embedding(
    category, images, labels, categories, vocab, encoder, unet, config: TrainConfig, schedule=None, init="copy", log=None
):
    """Optimize the concept token's vector on the denoising loss; everything else stays frozen.

    The concept token must already exist (``vocab.extend``). ``init="random"``
    replaces the copied meta-token vector with a fresh draw before training.
    The trained vector is written back into ``vocab.embeddings`` and returned
    with the loss trace.
    """
    if category not in categories:
        raise ValueError(f"category {category!r} is not in the dataset")
    k = list(categories).index(category)
    rows = _category_rows(labels, k)
    cid = vocab.concept_id(category)
    schedule = schedule or make_schedule()
    rng = np.random.default_rng([config.seed, 1, k])
    start = vocab.embeddings[cid].copy()
    if init == "random":
        start = (rng.normal(size=start.shape) * 0.5).astype(np.float32)
    elif init != "copy":
        raise ValueError("init must be 'copy' or 'random'")
    vec = Tensor(start, requires_grad=True)
    encoder.freeze()
    unet.freeze()
    opt = AdamW([vec], lr=config.lr, weight_decay=config.weight_decay)
    templates = training_templates(config)
    trace = []
    for step in range(config.steps):
        _, concept_prompt = ensemble_train_step(category, templates, rng, vocab)
        ids = vocab.tokenize(concept_prompt)
        batch = images[rows[rng.integers(len(rows), size=config.batch_size)]]
        zt, t, eps = _noised_batch(batch, rng, config, schedule)
        opt.zero_grad()
        with record():
            f_r = encode_prompt(ids, vocab, encoder, overrides={cid: vec})
            loss = denoising_loss(unet(zt, t, f_r), Tensor(eps))
        backward(loss, params=[vec])
        opt.step()
        trace.append(float(loss.data))
        if log is not None:
            log(step=step, stage="embedding", category=category, loss=trace[-1])
    vocab.embeddings[cid] = vec.data.astype(np.float32)
    return vec.data.copy(), trace


def finetune_denoiser(images, labels, categories, vocab, encoder, unet, config: TrainConfig, schedule=None, log=None):
    """Update the U-Net on L(f_d) + L(f_r) with all prompt embeddings frozen.

    Batches mix categories; both loss terms share each example's (t, eps).
    """
    missing = [c for c in categories if c not in vocab.concepts]
    if missing:
        raise MissingConceptError(f"no trained concept vector for {missing}")
    schedule = schedule or make_schedule()
    rng = np.random.default_rng([config.seed, 2])
    labels = np.asarray(labels)
    templates = training_templates(config)
    f_d = [prompt_embeddings(c, vocab, encoder, templates) for c in categories]
    f_r = [prompt_embeddings(c, vocab, encoder, templates, concept=True) for c in categories]
    encoder.freeze()
    unet.unfreeze()
    params = unet.parameters()
    opt = AdamW(params, lr=config.lr, weight_decay=config.weight_decay)
    trace = []
    for step in range(config.steps):
        idx = rng.integers(len(images), size=config.batch_size)
        zt, t, eps = _noised_batch(images[idx], rng, config, schedule)
        pick = rng.integers(len(templates), size=len(idx))
        ctx_d = np.stack([f_d[k][j] for k, j in zip(labels[idx], pick)])
        ctx_r = np.stack([f_r[k][j] for k, j in zip(labels[idx], pick)])
        opt.zero_grad()
        with record():
            loss = two_prompt_loss(unet, zt, t, eps, ctx_d, ctx_r)
        backward(loss, params=params)
        opt.step()
        trace.append(float(loss.data))
        if log is not None:
            log(step=step, stage="finetune", category=None, loss=trace[-1])
    unet.freeze()
    return trace


def two_prompt_loss(unet, zt, t, eps, ctx_d, ctx_r):
    """L(theta, f_d) + L(theta, f_r) computed in one doubled batch.

    Both halves have equal size, so twice the mean over the doubled batch is
    exactly the sum of the two per-prompt means.
    """
    z2 = np.concatenate([zt, zt])
    t2 = np.concatenate([np.broadcast_to(t, (len(zt),))] * 2)
    ctx = np.concatenate([ctx_d, ctx_r])
    return denoising_loss(unet(z2, t2, ctx), Tensor(np.concatenate([eps, eps]))) * 2.0


def fixed_batch_loss(unet, latents, context, t, eps, schedule: NoiseSchedule | None = None):
    """Denoising loss at fixed (t, eps), no gradients; for before/after comparisons."""
    schedule = schedule or make_schedule()
    zt = add_noise(latents, t, eps, schedule)
    return float(ops.mse(unet(zt, t, context), eps).data)
