from .common import (
    JsonlLog,
    MissingConceptError,
    TrainConfig,
    augment,
    ensemble_train_step,
    latents_of,
    prompt_embeddings,
)
from .stages import (
    finetune_denoiser,
    fixed_batch_loss,
    learn_concept_embedding,
    pretrain_denoiser,
    two_prompt_loss,
)

__all__ = [
    "JsonlLog",
    "MissingConceptError",
    "TrainConfig",
    "augment",
    "ensemble_train_step",
    "finetune_denoiser",
    "fixed_batch_loss",
    "latents_of",
    "learn_concept_embedding",
    "pretrain_denoiser",
    "prompt_embeddings",
    "two_prompt_loss",
]
