"""Inference: prompt embeddings -> cross-attention maps -> activation map -> box."""

from __future__ import annotations

import hashlib
import multiprocessing
from dataclasses import asdict, dataclass

import numpy as np

from ..diffusion import AttentionCapture, add_noise
from ..promptlearn.common import latents_of
from ..text.encoder import encode_prompt
from ..text.vocab import DEFAULT_TEMPLATE, TEMPLATES, fill_template, select_meta_token
from .maps import ActivationMap, BoundingBox, aggregate, combine_embeddings, map_to_bbox

NOISE_MODES = ("sampled", "zero")


@dataclass
class LocalizeConfig:
    w: float = 0.6
    timesteps: tuple = (1, 100)
    resolutions: tuple = (8, 16)
    noise: str = "sampled"
    seed: int = 0
    tau: float = 0.4
    ensemble: bool = False
    templates: tuple = TEMPLATES
    template: str = DEFAULT_TEMPLATE
    batch_size: int = 32

    def __post_init__(self):
        self.timesteps = tuple(int(t) for t in self.timesteps)
        self.resolutions = tuple(int(r) for r in self.resolutions)
        self.templates = tuple(self.templates)
        if not 0.0 <= self.w <= 1.0:
            raise ValueError(f"w={self.w} outside [0, 1]")
        if not 0.0 < self.tau < 1.0:
            raise ValueError(f"tau={self.tau} outside (0, 1)")
        if self.noise not in NOISE_MODES:
            raise ValueError(f"noise must be one of {NOISE_MODES}")
        if not self.timesteps or not self.resolutions:
            raise ValueError("timesteps and resolutions must be non-empty")
        if self.ensemble and not self.templates:
            raise ValueError("ensemble mode needs at least one template")

    def to_dict(self):
        return asdict(self)


class UnknownCategoryError(KeyError):
    pass


def image_seed(seed, image_id):
    """Per-image generator seed derived from (global seed, image id)."""
    digest = hashlib.sha256(str(image_id).encode()).digest()
    return [int(seed), int.from_bytes(digest[:8], "little")]


def _slot(template):
    return template.split().index("{}") + 1  # +1 for the start token


def category_embeddings(pipeline, category, config: LocalizeConfig):
    """(f_d, f_r or None, token position) for one category.

    In ensemble mode both embeddings are averaged over the template set, which
    must place the category word at one common position.
    """
    if category not in pipeline.categories:
        raise UnknownCategoryError(f"category {category!r} is not in the checkpoint")
    templates = config.templates if config.ensemble else (config.template,)
    slots = {_slot(t) for t in templates}
    if len(slots) != 1:
        raise ValueError("ensemble templates must place the category at the same position")
    vocab, enc = pipeline.vocab, pipeline.text
    meta = select_meta_token(category)
    ids_d = np.stack([vocab.tokenize(fill_template(t, meta)) for t in templates])
    f_d = encode_prompt(ids_d, vocab, enc).data.mean(axis=0)
    f_r = None
    if category in vocab.concepts:
        ids_r = np.stack([vocab.tokenize(vocab.prompt_pair(category, t)[1]) for t in templates])
        f_r = encode_prompt(ids_r, vocab, enc).data.mean(axis=0)
    return f_d, f_r, slots.pop()


def combined_embedding(pipeline, category, config: LocalizeConfig):
    f_d, f_r, pos = category_embeddings(pipeline, category, config)
    if f_r is None:
        if config.w != 0.0:
            raise ValueError(f"no concept embedding for {category!r}; only w=0 is possible")
        return f_d, pos
    return combine_embeddings(f_d, f_r, config.w), pos


def extract_maps(latents, contexts, position, config: LocalizeConfig, unet, schedule, eps):
    """Captured maps for a batch: {(layer, t): [B, h, w]} at the configured resolutions.

    ``eps`` holds one noise draw per image and is reused for every timestep.
    """
    wanted = set(config.resolutions)
    out = {}
    for t in config.timesteps:
        if not 1 <= t <= schedule.T:
            raise ValueError(f"timestep {t} outside 1..{schedule.T}")
        cap = AttentionCapture()
        unet(add_noise(latents, t, eps, schedule), t, contexts, capture=cap)
        for rec in cap:
            if rec.resolution in wanted:
                out[(rec.layer, t)] = rec.maps[:, position]
    if not out:
        raise ValueError(f"no captured layer has a resolution in {sorted(wanted)}")
    return out


def _noise_for(image_ids, shape, config):
    if config.noise == "zero":
        return np.zeros((len(image_ids),) + shape, dtype=np.float32)
    return np.stack(
        [np.random.default_rng(image_seed(config.seed, i)).standard_normal(shape).astype(np.float32) for i in image_ids]
    )


def localize_batch(pipeline, images, categories, config: LocalizeConfig, image_ids):
    """Boxes and activation maps for HWC images in [-1, 1], one category per image."""
    images = np.asarray(images, dtype=np.float32)
    if len(images) != len(categories) or len(images) != len(image_ids):
        raise ValueError("images, categories and image ids must have equal length")
    cache = {}
    ctx, positions = [], set()
    for c in categories:
        if c not in cache:
            cache[c] = combined_embedding(pipeline, c, config)
        ctx.append(cache[c][0])
        positions.add(cache[c][1])
    position = positions.pop()
    size = images.shape[1:3]
    results = []
    for lo in range(0, len(images), config.batch_size):
        sl = slice(lo, lo + config.batch_size)
        z0 = latents_of(images[sl])
        eps = _noise_for(image_ids[sl], z0.shape[1:], config)
        maps = extract_maps(z0, np.stack(ctx[sl]), position, config, pipeline.unet, pipeline.schedule, eps)
        keys = sorted(maps, key=lambda k: (k[1], k[0]))
        for b in range(len(z0)):
            M = aggregate([maps[k][b] for k in keys])
            box = map_to_bbox(M, config.tau, size)
            results.append((box, ActivationMap(M, [(layer, int(t)) for layer, t in keys])))
    return results


def localize(image, category, pipeline, config: LocalizeConfig, image_id="image"):
    """Box and activation map for one HWC image in [-1, 1]."""
    return localize_batch(pipeline, np.asarray(image)[None], [category], config, [image_id])[0]


_WORKER = {}


def _init_worker(pipeline, config):
    _WORKER["pipeline"] = pipeline
    _WORKER["config"] = config


def _run_chunk(args):
    images, categories, ids = args
    return localize_batch(_WORKER["pipeline"], images, categories, _WORKER["config"], ids)


def localize_many(pipeline, images, categories, image_ids, config: LocalizeConfig, workers=1):
    """localize_batch over a worker pool; results do not depend on ``workers``.

    Noise is seeded per image id, so any partition of the images gives the
    same boxes.
    """
    image_ids = list(image_ids)
    if workers <= 1 or len(images) <= config.batch_size:
        return localize_batch(pipeline, images, categories, config, image_ids)
    step = config.batch_size
    chunks = [(images[i : i + step], categories[i : i + step], image_ids[i : i + step]) for i in range(0, len(images), step)]
    ctx = multiprocessing.get_context("fork")
    with ctx.Pool(workers, initializer=_init_worker, initargs=(pipeline, config)) as pool:
        parts = pool.map(_run_chunk, chunks)
    return [r for part in parts for r in part]
