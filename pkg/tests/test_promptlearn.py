import hashlib

import numpy as np
import pytest

from promptloc.diffusion import add_noise
from promptloc.numerics import ops
from promptloc.promptlearn import (
    JsonlLog,
    MissingConceptError,
    TrainConfig,
    augment,
    ensemble_train_step,
    finetune_denoiser,
    fixed_batch_loss,
    latents_of,
    learn_concept_embedding,
    prompt_embeddings,
    two_prompt_loss,
)
from promptloc.text import TEMPLATES, encode_prompt

from conftest import TINY_CATEGORIES, tiny_pipeline


def checksum(*arrays):
    h = hashlib.sha256()
    for a in arrays:
        h.update(np.ascontiguousarray(a).tobytes())
    return h.hexdigest()


def module_sum(m):
    return checksum(*[v for _, v in sorted(m.state_dict().items())])


def data(n_per=4, seed=0):
    rng = np.random.default_rng(seed)
    K = len(TINY_CATEGORIES)
    images = rng.uniform(-1, 1, size=(n_per * K, 64, 64, 3)).astype(np.float32)
    return images, np.repeat(np.arange(K), n_per)


def test_singleton_template_set():
    rng = np.random.default_rng(0)
    for _ in range(20):
        d, r = ensemble_train_step("red circle, crimson disc", ["a rendering of a {}"], rng)
        assert d == "a rendering of a circle" and r == "a rendering of a <red_circle>"


def test_template_frequencies_uniform():
    rng = np.random.default_rng(0)
    counts = dict.fromkeys(TEMPLATES, 0)
    for _ in range(10_000):
        d, _ = ensemble_train_step("cross", TEMPLATES, rng)
        counts[d.replace("cross", "{}")] += 1
    for c in counts.values():
        assert abs(c / 10_000 - 1 / 7) <= 0.02


def test_pair_differs_only_in_slot(tiny):
    rng = np.random.default_rng(1)
    for _ in range(10):
        d, r = ensemble_train_step(TINY_CATEGORIES[1], TEMPLATES, rng, tiny.vocab)
        diff = [(a, b) for a, b in zip(d.split(), r.split()) if a != b]
        assert len(d.split()) == len(r.split()) and diff == [("square", "<green_square>")]


def test_empty_template_set():
    with pytest.raises(ValueError):
        ensemble_train_step("cross", [], np.random.default_rng(0))


@pytest.mark.parametrize(
    "kwargs", [{"stage": "warmup"}, {"steps": -1}, {"batch_size": 0}, {"lr": -1.0}, {"template_policy": "all"}]
)
def test_train_config_validation(kwargs):
    with pytest.raises(ValueError):
        TrainConfig(**kwargs)


def test_augment_shapes_and_flip():
    rng = np.random.default_rng(0)
    x = np.random.default_rng(1).uniform(-1, 1, size=(64, 64, 64, 3)).astype(np.float32)
    out = augment(x, rng, hflip=True, color_jitter=0.0)
    flipped = [np.array_equal(o, xi[:, ::-1]) for o, xi in zip(out, x)]
    same = [np.array_equal(o, xi) for o, xi in zip(out, x)]
    assert all(f or s for f, s in zip(flipped, same)) and 0 < sum(flipped) < 64
    jit = augment(x, rng, hflip=False, color_jitter=0.1)
    assert jit.min() >= -1 and jit.max() <= 1 and not np.array_equal(jit, x)


def test_zero_steps_keeps_copy_init():
    p = tiny_pipeline()
    images, labels = data()
    cat = TINY_CATEGORIES[0]
    vec, trace = learn_concept_embedding(
        cat, images, labels, TINY_CATEGORIES, p.vocab, p.text, p.unet, TrainConfig(steps=0)
    )
    assert trace == []
    f_d = prompt_embeddings(cat, p.vocab, p.text, TEMPLATES)
    f_r = prompt_embeddings(cat, p.vocab, p.text, TEMPLATES, concept=True)
    assert f_d.tobytes() == f_r.tobytes()


def test_embedding_stage_touches_only_the_concept_vector():
    p = tiny_pipeline()
    images, labels = data()
    cat = TINY_CATEGORIES[1]
    cid = p.vocab.concept_id(cat)
    before = (module_sum(p.unet), module_sum(p.text), checksum(np.delete(p.vocab.embeddings, cid, axis=0)))
    start = p.vocab.embeddings[cid].copy()
    log = JsonlLog()
    vec, trace = learn_concept_embedding(
        cat, images, labels, TINY_CATEGORIES, p.vocab, p.text, p.unet, TrainConfig(steps=3, batch_size=2), log=log
    )
    after = (module_sum(p.unet), module_sum(p.text), checksum(np.delete(p.vocab.embeddings, cid, axis=0)))
    assert before == after
    assert not np.array_equal(start, vec)
    np.testing.assert_array_equal(p.vocab.embeddings[cid], vec)
    assert [r["step"] for r in log.records] == [0, 1, 2]
    assert {r["stage"] for r in log.records} == {"embedding"} and len(trace) == 3


def test_embedding_training_lowers_fixed_batch_loss():
    p = tiny_pipeline(seed=2)
    images, labels = data(n_per=6)
    cat = TINY_CATEGORIES[2]
    rows = labels == 2
    z0 = latents_of(images[rows])
    rng = np.random.default_rng(5)
    t = rng.integers(1, 1001, size=len(z0))
    eps = rng.standard_normal(z0.shape).astype(np.float32)
    ids = p.vocab.tokenize(p.vocab.prompt_pair(cat)[1])

    def held_out():
        ctx = encode_prompt(ids, p.vocab, p.text).data
        zt = add_noise(z0, t, eps, p.schedule)
        return float(ops.mse(p.unet(zt, t, ctx), eps).data)

    start = held_out()
    cfg = TrainConfig(steps=40, batch_size=6, lr=5e-2, hflip=False, color_jitter=0.0)
    learn_concept_embedding(cat, images, labels, TINY_CATEGORIES, p.vocab, p.text, p.unet, cfg)
    assert held_out() <= start


def test_embedding_errors():
    p = tiny_pipeline()
    images, labels = data()
    with pytest.raises(ValueError):
        learn_concept_embedding("blue hexagon", images, labels, TINY_CATEGORIES, p.vocab, p.text, p.unet, TrainConfig())
    with pytest.raises(ValueError):
        learn_concept_embedding(
            TINY_CATEGORIES[0], images, labels, TINY_CATEGORIES, p.vocab, p.text, p.unet, TrainConfig(steps=1), init="zero"
        )
    with pytest.raises(ValueError):
        only_first = np.zeros_like(labels)
        learn_concept_embedding(
            TINY_CATEGORIES[1], images, only_first, TINY_CATEGORIES, p.vocab, p.text, p.unet, TrainConfig(steps=1)
        )


def test_random_init_replaces_copy():
    p = tiny_pipeline()
    images, labels = data()
    cat = TINY_CATEGORIES[0]
    meta = p.vocab.embeddings[p.vocab.id("circle")].copy()
    vec, _ = learn_concept_embedding(
        cat, images, labels, TINY_CATEGORIES, p.vocab, p.text, p.unet, TrainConfig(steps=0), init="random"
    )
    assert not np.allclose(vec, meta)


def test_finetune_lr_zero_is_identity_and_freezes_embeddings():
    p = tiny_pipeline()
    images, labels = data()
    before = (module_sum(p.unet), checksum(p.vocab.embeddings), module_sum(p.text))
    finetune_denoiser(images, labels, TINY_CATEGORIES, p.vocab, p.text, p.unet, TrainConfig(stage="finetune", steps=2, lr=0.0, weight_decay=0.0, batch_size=2))
    assert before == (module_sum(p.unet), checksum(p.vocab.embeddings), module_sum(p.text))
    finetune_denoiser(images, labels, TINY_CATEGORIES, p.vocab, p.text, p.unet, TrainConfig(stage="finetune", steps=2, lr=1e-3, batch_size=2))
    assert module_sum(p.unet) != before[0]
    assert (checksum(p.vocab.embeddings), module_sum(p.text)) == before[1:]


def test_finetune_requires_every_concept():
    p = tiny_pipeline(concepts=False)
    p.vocab.extend(TINY_CATEGORIES[0])
    images, labels = data()
    with pytest.raises(MissingConceptError):
        finetune_denoiser(images, labels, TINY_CATEGORIES, p.vocab, p.text, p.unet, TrainConfig(stage="finetune", steps=1))


def test_two_prompt_loss_is_sum_of_separate_losses():
    p = tiny_pipeline()
    # amplify the prompt's influence so the two terms differ measurably
    for m in (p.unet.conv_out, p.unet.enc1.cross_attn.out, p.unet.dec1.cross_attn.out):
        m.weight.data *= 20
    images, _ = data(n_per=1)
    cat = TINY_CATEGORIES[0]
    z0 = latents_of(images[:1])
    rng = np.random.default_rng(3)
    t = np.array([37])
    eps = rng.standard_normal(z0.shape).astype(np.float32)
    zt = add_noise(z0, t, eps, p.schedule)
    f_d = prompt_embeddings(cat, p.vocab, p.text, TEMPLATES[:1])
    p.vocab.embeddings[p.vocab.concept_id(cat)] += rng.normal(size=16).astype(np.float32)
    f_r = prompt_embeddings(cat, p.vocab, p.text, TEMPLATES[:1], concept=True)
    joint = float(two_prompt_loss(p.unet, zt, t, eps, f_d, f_r).data)
    l_d = fixed_batch_loss(p.unet, z0, f_d[0], 37, eps, p.schedule)
    l_r = fixed_batch_loss(p.unet, z0, f_r[0], 37, eps, p.schedule)
    assert joint == pytest.approx(l_d + l_r, rel=1e-5)
    assert l_d != l_r


def test_training_is_reproducible():
    images, labels = data()
    out = []
    for _ in range(2):
        p = tiny_pipeline()
        cfg = TrainConfig(steps=2, batch_size=2, seed=7)
        vec, trace = learn_concept_embedding(TINY_CATEGORIES[0], images, labels, TINY_CATEGORIES, p.vocab, p.text, p.unet, cfg)
        finetune_denoiser(images, labels, TINY_CATEGORIES, p.vocab, p.text, p.unet, TrainConfig(stage="finetune", steps=2, batch_size=2, seed=7))
        out.append((vec.tobytes(), tuple(trace), module_sum(p.unet)))
    assert out[0] == out[1]


def test_jsonl_log_writes_lines(tmp_path):
    log = JsonlLog(tmp_path / "log.jsonl")
    log(step=0, stage="finetune", category=None, loss=1.5)
    log(step=1, stage="finetune", category=None, loss=1.25)
    lines = (tmp_path / "log.jsonl").read_text().splitlines()
    assert lines[1] == '{"step": 1, "stage": "finetune", "category": null, "loss": 1.25}'

