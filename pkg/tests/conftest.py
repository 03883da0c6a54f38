import numpy as np
import pytest

from promptloc.pipeline import build_pipeline

TINY_CATEGORIES = ["red circle, crimson disc", "green square, emerald tile", "cross"]


def tiny_pipeline(categories=TINY_CATEGORIES, seed=0, concepts=True):
    """Untrained pipeline small enough for unit tests."""
    p = build_pipeline(
        categories,
        text_config={"width": 16, "heads": 2, "layers": 1, "embed_dim": 16},
        image_config={"widths": (8, 8, 8), "embed_dim": 16},
        unet_config={"channels": (8, 16), "context_dim": 16, "heads": 2, "time_dim": 16},
        seed=seed,
    )
    p.text.freeze()
    p.unet.freeze()
    if concepts:
        for c in categories:
            p.vocab.extend(c)
    return p


@pytest.fixture
def tiny():
    return tiny_pipeline()


@pytest.fixture
def images():
    return np.random.default_rng(0).uniform(-1, 1, size=(3, 64, 64, 3)).astype(np.float32)
