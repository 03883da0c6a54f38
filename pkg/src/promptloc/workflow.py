"""Stage runners shared by the command line and the estimator.

Each runner takes a Pipeline at the previous stage, trains in place and
advances the stage marker.
"""

from __future__ import annotations

import logging

import numpy as np

from .diffusion import make_schedule
from .pipeline import Pipeline, build_pipeline, require_stage
from .promptlearn import TrainConfig, finetune_denoiser, learn_concept_embedding, pretrain_denoiser
from .text import ContrastiveConfig, contrastive_pretrain

log = logging.getLogger("promptloc")

_TRAIN_KEYS = ("steps", "lr", "batch_size", "weight_decay", "template_policy", "hflip", "color_jitter")


def new_pipeline(categories, cfg) -> Pipeline:
    s = cfg["schedule"]
    return build_pipeline(
        categories,
        text_config=cfg["text"],
        image_config={"widths": tuple(cfg["image_encoder"]["widths"]), "embed_dim": cfg["image_encoder"]["embed_dim"]},
        unet_config={**cfg["unet"], "channels": tuple(cfg["unet"]["channels"])},
        schedule=make_schedule(s["T"], s["beta_start"], s["beta_end"]),
        seed=cfg["seed"],
    )


def train_config(cfg, stage, **overrides) -> TrainConfig:
    section = cfg["pretrain" if stage == "pretrain" else stage]
    kwargs = {k: section[k] for k in _TRAIN_KEYS if k in section}
    kwargs.update(overrides)
    return TrainConfig(stage=stage, seed=cfg["seed"], **kwargs)


def _every(n):
    def cb(step, loss, what):
        if step % n == 0:
            log.info("%s step=%d loss=%.4f", what, step, loss)

    return cb


def run_clip(p: Pipeline, images, labels, cfg, log_fn=None):
    require_stage(p.stage, "clip")
    c = cfg["clip"]
    config = ContrastiveConfig(
        steps=c["steps"], lr=c["lr"], weight_decay=c["weight_decay"], init_logit_scale=c["init_logit_scale"], hflip=c["hflip"]
    )
    p.dual.log_scale.data = np.array(np.log(config.init_logit_scale), dtype=np.float32)
    cb = _every(100)

    def on_step(step, loss):
        cb(step, loss, "clip")
        if log_fn is not None:
            log_fn(step=step, stage="clip", category=None, loss=loss)

    trace = contrastive_pretrain(images, labels, p.categories, p.dual, config, seed=cfg["seed"], on_step=on_step)
    p.advance("clip")
    return trace


def _logger(stage, log_fn, every=100):
    cb = _every(every)

    def fn(**rec):
        cb(rec["step"], rec["loss"], stage if rec.get("category") is None else f"{stage}[{rec['category']}]")
        if log_fn is not None:
            log_fn(**rec)

    return fn


def run_pretrain(p: Pipeline, images, labels, cfg, log_fn=None, **overrides):
    require_stage(p.stage, "unet")
    config = train_config(cfg, "pretrain", **overrides)
    trace = pretrain_denoiser(images, labels, p.categories, p.vocab, p.text, p.unet, config, p.schedule, _logger("pretrain", log_fn))
    p.advance("unet")
    return trace


def run_embedding(p: Pipeline, images, labels, cfg, init="copy", log_fn=None, **overrides):
    require_stage(p.stage, "embedding")
    config = train_config(cfg, "embedding", **overrides)
    traces = {}
    for c in p.categories:
        if c not in p.vocab.concepts:
            p.vocab.extend(c)
        _, traces[c] = learn_concept_embedding(
            c, images, labels, p.categories, p.vocab, p.text, p.unet, config, p.schedule, init=init,
            log=_logger("embedding", log_fn),
        )
    p.advance("embedding")
    return traces


def run_finetune(p: Pipeline, images, labels, cfg, log_fn=None, **overrides):
    require_stage(p.stage, "finetune")
    config = train_config(cfg, "finetune", **overrides)
    trace = finetune_denoiser(images, labels, p.categories, p.vocab, p.text, p.unet, config, p.schedule, _logger("finetune", log_fn))
    p.advance("finetune")
    return trace
