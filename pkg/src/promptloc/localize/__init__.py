from .export import read_map_grid, read_predictions, write_map_grid, write_pgm, write_predictions
from .infer import (
    LocalizeConfig,
    UnknownCategoryError,
    category_embeddings,
    combined_embedding,
    extract_maps,
    image_seed,
    localize,
    localize_batch,
    localize_many,
)
from .maps import ActivationMap, BoundingBox, DegenerateMapError, aggregate, combine_embeddings, map_to_bbox

__all__ = [
    "ActivationMap",
    "BoundingBox",
    "DegenerateMapError",
    "LocalizeConfig",
    "UnknownCategoryError",
    "aggregate",
    "category_embeddings",
    "combine_embeddings",
    "combined_embedding",
    "extract_maps",
    "image_seed",
    "localize",
    "localize_batch",
    "localize_many",
    "map_to_bbox",
    "read_map_grid",
    "read_predictions",
    "write_map_grid",
    "write_pgm",
    "write_predictions",
]
