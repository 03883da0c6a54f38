"""scikit-learn style wrapper around the full train / localize pipeline."""

from __future__ import annotations

import copy

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import workflow
from .config import load_config
from .data.classify import classify
from .data.synthetic import DEFAULT_CATEGORIES
from .localize import LocalizeConfig, localize_many
from .validation import check_images, check_labels


class PromptLocalizer(BaseEstimator):
    """Weakly supervised localizer trained from image-level labels only.

    ``fit`` runs contrastive pretraining, denoiser training, concept-vector
    learning and finetuning. ``predict`` returns one box per image as
    ``[x_min, y_min, x_max, y_max]``; ``transform`` returns the activation
    maps the boxes are cut from. When ``y`` is omitted at prediction time
    the zero-shot classifier picks the category.
    """

    def __init__(
        self,
        categories=None,
        clip_steps=600,
        pretrain_steps=3000,
        embedding_steps=300,
        finetune_steps=500,
        unet_channels=(64, 128),
        w=0.6,
        tau=0.4,
        timesteps=(1, 100),
        resolutions=(8, 16),
        noise="sampled",
        ensemble=False,
        embedding_init="copy",
        seed=0,
        workers=1,
    ):
        self.categories = categories
        self.clip_steps = clip_steps
        self.pretrain_steps = pretrain_steps
        self.embedding_steps = embedding_steps
        self.finetune_steps = finetune_steps
        self.unet_channels = unet_channels
        self.w = w
        self.tau = tau
        self.timesteps = timesteps
        self.resolutions = resolutions
        self.noise = noise
        self.ensemble = ensemble
        self.embedding_init = embedding_init
        self.seed = seed
        self.workers = workers

    def _config(self):
        cfg = copy.deepcopy(load_config())
        cfg["seed"] = self.seed
        cfg["clip"]["steps"] = self.clip_steps
        cfg["pretrain"]["steps"] = self.pretrain_steps
        cfg["embedding"]["steps"] = self.embedding_steps
        cfg["finetune"]["steps"] = self.finetune_steps
        cfg["unet"]["channels"] = list(self.unet_channels)
        return cfg

    def _localize_config(self):
        return LocalizeConfig(
            w=self.w,
            tau=self.tau,
            timesteps=self.timesteps,
            resolutions=self.resolutions,
            noise=self.noise,
            ensemble=self.ensemble,
            seed=self.seed,
        )

    def fit(self, X, y):
        cats = list(self.categories) if self.categories is not None else list(DEFAULT_CATEGORIES)
        X = check_images(X)
        y = check_labels(y, len(X), len(cats))
        if len(np.unique(y)) != len(cats):
            raise ValueError("every category needs at least one training image")
        self._localize_config()  # validate inference parameters before training
        cfg = self._config()
        p = workflow.new_pipeline(cats, cfg)
        workflow.run_clip(p, X, y, cfg)
        workflow.run_pretrain(p, X, y, cfg)
        workflow.run_embedding(p, X, y, cfg, init=self.embedding_init)
        workflow.run_finetune(p, X, y, cfg)
        self.pipeline_ = p
        self.categories_ = cats
        self.n_features_in_ = int(np.prod(X.shape[1:]))
        return self

    def _targets(self, X, y):
        if y is None:
            return [self.categories_[k] for k in self.predict_category(X)]
        y = check_labels(y, len(X), len(self.categories_))
        return [self.categories_[k] for k in y]

    def predict_category(self, X):
        """Rank-1 category id per image from the zero-shot classifier."""
        check_is_fitted(self, "pipeline_")
        return classify(check_images(X), self.pipeline_.dual, self.categories_, k=1)[:, 0]

    def _run(self, X, y):
        check_is_fitted(self, "pipeline_")
        X = check_images(X)
        cats = self._targets(X, y)
        ids = [f"image_{i:06d}" for i in range(len(X))]
        return localize_many(self.pipeline_, X, cats, ids, self._localize_config(), workers=self.workers)

    def predict(self, X, y=None):
        return np.array([box.as_tuple() for box, _ in self._run(X, y)], dtype=np.int64)

    def transform(self, X, y=None):
        return np.stack([amap.values for _, amap in self._run(X, y)])
