from .contrastive import ContrastiveConfig, DualEncoder, contrastive_loss, contrastive_pretrain
from .encoder import ImageEncoder, TextEncoder, encode_prompt
from .vocab import TEMPLATES, Vocab, concept_token, corpus_words, select_meta_token

__all__ = [
    "ContrastiveConfig",
    "DualEncoder",
    "ImageEncoder",
    "TEMPLATES",
    "TextEncoder",
    "Vocab",
    "concept_token",
    "contrastive_loss",
    "contrastive_pretrain",
    "corpus_words",
    "encode_prompt",
    "select_meta_token",
]
