"""Training configuration, augmentation, prompt sampling and the JSONL log."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from ..diffusion.codec import encode_image, hwc_to_chw
from ..text.encoder import encode_prompt
from ..text.vocab import DEFAULT_TEMPLATE, TEMPLATES, category_names, concept_token, fill_template, select_meta_token

STAGES = ("pretrain", "embedding", "finetune")
POLICIES = ("fixed", "ensemble")


class MissingConceptError(KeyError):
    pass


@dataclass
class TrainConfig:
    stage: str = "embedding"
    steps: int = 300
    lr: float = 5e-3
    batch_size: int = 8
    seed: int = 0
    weight_decay: float = 1e-2
    template_policy: str = "fixed"
    hflip: bool = True
    color_jitter: float = 0.05

    def __post_init__(self):
        if self.stage not in STAGES:
            raise ValueError(f"stage must be one of {STAGES}, got {self.stage!r}")
        if self.template_policy not in POLICIES:
            raise ValueError(f"template_policy must be one of {POLICIES}")
        if self.steps < 0 or self.batch_size < 1:
            raise ValueError("steps must be >= 0 and batch_size >= 1")
        if self.lr < 0 or self.weight_decay < 0 or self.color_jitter < 0:
            raise ValueError("lr, weight_decay and color_jitter must be non-negative")

    def to_dict(self):
        return asdict(self)


class JsonlLog:
    """Appends one JSON object per call; also usable as a plain callback."""

    def __init__(self, path=None):
        self.path = path
        self.records = []

    def __call__(self, **fields):
        self.records.append(fields)
        if self.path is not None:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(fields) + "\n")


def augment(images, rng, hflip=True, color_jitter=0.0):
    """Random horizontal flip and brightness/contrast jitter on HWC images in [-1, 1]."""
    out = np.array(images, dtype=np.float32, copy=True)
    n = out.shape[0]
    if hflip:
        flip = rng.random(n) < 0.5
        out[flip] = out[flip, :, ::-1]
    if color_jitter > 0:
        gain = 1.0 + rng.uniform(-color_jitter, color_jitter, size=(n, 1, 1, 1))
        shift = rng.uniform(-color_jitter, color_jitter, size=(n, 1, 1, 3))
        out = np.clip(out * gain + shift, -1.0, 1.0).astype(np.float32)
    return out


def latents_of(images):
    """HWC images in [-1, 1] -> codec latents [N, 48, 16, 16]."""
    return encode_image(hwc_to_chw(images))


def ensemble_train_step(category, templates, rng, vocab=None):
    """Sample one template; return (meta-token prompt, concept-token prompt).

    Without a vocab the concept token is formed from the category name, so
    the pair can be drawn before the vocabulary has been extended.
    """
    if not templates:
        raise ValueError("template set is empty")
    template = templates[int(rng.integers(len(templates)))]
    if vocab is not None:
        return vocab.prompt_pair(category, template)
    return fill_template(template, select_meta_token(category)), fill_template(template, concept_token(category))


def training_templates(config: TrainConfig):
    return TEMPLATES if config.template_policy == "ensemble" else (DEFAULT_TEMPLATE,)


def caption_embeddings(category, vocab, encoder):
    """Prompt embeddings [P, T, D] over every template x synonym (meta token included)."""
    names = category_names(category) + [select_meta_token(category)]
    prompts = sorted({fill_template(t, n) for t in TEMPLATES for n in names})
    ids = np.stack([vocab.tokenize(p) for p in prompts])
    return encode_prompt(ids, vocab, encoder).data


def prompt_embeddings(category, vocab, encoder, templates, concept=False):
    """[P, T, D] embeddings of the meta (or concept) prompt for each template."""
    if concept:
        prompts = [vocab.prompt_pair(category, t)[1] for t in templates]
    else:
        prompts = [fill_template(t, select_meta_token(category)) for t in templates]
    ids = np.stack([vocab.tokenize(p) for p in prompts])
    return encode_prompt(ids, vocab, encoder).data
