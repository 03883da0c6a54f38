from .classify import UntrainedEncoderError, classify, rank_scores, similarity_scores
from .manifest import DatasetManifest, ManifestError, ManifestVersionError, Record, load_manifest, save_manifest, to_model_images
from .synthetic import DEFAULT_CATEGORIES, SyntheticConfig, generate_synthetic, render_image

__all__ = [
    "UntrainedEncoderError",
    "classify",
    "rank_scores",
    "similarity_scores",
    "DEFAULT_CATEGORIES",
    "DatasetManifest",
    "ManifestError",
    "ManifestVersionError",
    "Record",
    "SyntheticConfig",
    "generate_synthetic",
    "load_manifest",
    "render_image",
    "save_manifest",
    "to_model_images",
]
