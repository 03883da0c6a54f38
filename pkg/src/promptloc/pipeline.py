"""The trained artifact passed between stages: encoders, vocab, denoiser, schedule."""

from __future__ import annotations

from dataclasses import dataclass, field

from .diffusion import NoiseSchedule, UNet, make_schedule
from .text import DualEncoder, ImageEncoder, TextEncoder, Vocab, corpus_words

# stages in the order they are produced; each consumes the previous one
STAGE_ORDER = ("init", "clip", "unet", "embedding", "finetune")


class StageError(RuntimeError):
    pass


@dataclass
class Pipeline:
    dual: DualEncoder
    unet: UNet
    categories: list
    schedule: NoiseSchedule = field(default_factory=make_schedule)
    stage: str = "init"
    history: list = field(default_factory=list)

    @property
    def vocab(self) -> Vocab:
        return self.dual.vocab

    @property
    def text(self) -> TextEncoder:
        return self.dual.text

    def advance(self, stage):
        """Record that ``stage`` finished; it must directly follow the current one."""
        require_stage(self.stage, stage)
        self.history.append(stage)
        self.stage = stage

    def has_concepts(self):
        return all(c in self.vocab.concepts for c in self.categories)


def require_stage(current, target):
    """Raise StageError unless ``target`` is the stage right after ``current``."""
    if target not in STAGE_ORDER or current not in STAGE_ORDER:
        raise StageError(f"unknown stage {target if target not in STAGE_ORDER else current!r}")
    if STAGE_ORDER.index(target) != STAGE_ORDER.index(current) + 1:
        raise StageError(f"stage {target!r} cannot follow a {current!r} checkpoint")


def build_pipeline(categories, text_config=None, image_config=None, unet_config=None, schedule=None, seed=0):
    """Fresh, untrained components for ``categories``."""
    text_config = dict(text_config or {})
    vocab = Vocab.build(
        corpus_words(categories),
        dim=text_config.get("width", 64),
        context_length=text_config.get("context_length", 16),
        seed=seed,
    )
    text = TextEncoder(seed=seed, **text_config)
    image = ImageEncoder(seed=seed + 1, **dict(image_config or {}))
    unet = UNet(seed=seed, **dict(unet_config or {}))
    return Pipeline(
        dual=DualEncoder(vocab, text, image),
        unet=unet,
        categories=list(categories),
        schedule=schedule or make_schedule(),
        stage="init",
    )
