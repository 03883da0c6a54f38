import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from promptloc.numerics import Tensor, backward, precision, record
from promptloc.numerics import ops
from promptloc.text import (
    TEMPLATES,
    ContrastiveConfig,
    DualEncoder,
    ImageEncoder,
    TextEncoder,
    Vocab,
    contrastive_loss,
    contrastive_pretrain,
    corpus_words,
    encode_prompt,
    select_meta_token,
)
from promptloc.text.vocab import UnknownTokenError, concept_token

from gradcheck import max_relative_error, numeric_grad

CATS = ["red circle, crimson disc", "green square, emerald tile", "cross"]


@pytest.fixture
def vocab():
    return Vocab.build(corpus_words(CATS), dim=16, context_length=16)


@pytest.mark.parametrize(
    "category, meta",
    [
        ("goldfish, Carassius auratus", "goldfish"),
        ("electric ray, crampfish, numbfish, torpedo", "ray"),
        ("tower", "tower"),
        ("Red Circle, crimson disc", "circle"),
    ],
)
def test_select_meta_token(category, meta):
    assert select_meta_token(category) == meta


@pytest.mark.parametrize("bad", ["", "   ", ", foo"])
def test_select_meta_token_rejects_empty(bad):
    with pytest.raises(ValueError):
        select_meta_token(bad)


@given(st.lists(st.from_regex(r"[a-z]{1,8}", fullmatch=True), min_size=1, max_size=4))
def test_select_meta_token_idempotent(words):
    meta = select_meta_token(" ".join(words))
    assert select_meta_token(meta) == meta


def test_default_templates_verbatim():
    assert TEMPLATES == (
        "a photo of a {}",
        "a rendering of a {}",
        "the photo of a {}",
        "a photo of my {}",
        "a photo of the {}",
        "a photo of one {}",
        "a rendition of a {}",
    )


def test_tokenize_pads_and_wraps(vocab):
    ids = vocab.tokenize("a photo of a circle")
    assert len(ids) == vocab.context_length
    assert ids[0] == vocab.start_id and ids[6] == vocab.end_id
    assert ids[1] == ids[4]  # "a" twice
    assert np.all(ids[7:] == vocab.pad_id)


def test_tokenize_unknown_word_names_it(vocab):
    with pytest.raises(UnknownTokenError, match="goldfish"):
        vocab.tokenize("a photo of a goldfish")


def test_round_trip_over_corpus(vocab):
    for template in TEMPLATES:
        for cat in CATS:
            for name in [n.strip() for n in cat.split(",")] + [select_meta_token(cat)]:
                s = template.format(name)
                assert vocab.detokenize(vocab.tokenize(s)) == s


def test_extend_vocab(vocab):
    n = len(vocab)
    cid = vocab.extend(CATS[0])
    assert len(vocab) == n + 1
    assert vocab.tokens[cid] == concept_token(CATS[0]) == "<red_circle>"
    assert np.flatnonzero(vocab.trainable).tolist() == [cid]
    np.testing.assert_array_equal(vocab.embeddings[cid], vocab.embeddings[vocab.id("circle")])
    with pytest.raises(ValueError):
        vocab.extend(CATS[0])


def test_copy_init_gives_identical_embeddings(vocab):
    enc = TextEncoder(width=16, heads=2, layers=2)
    vocab.extend(CATS[0])
    for template in TEMPLATES:
        meta_prompt, concept_prompt = vocab.prompt_pair(CATS[0], template)
        f_d = encode_prompt(vocab.tokenize(meta_prompt), vocab, enc).data
        f_r = encode_prompt(vocab.tokenize(concept_prompt), vocab, enc).data
        assert f_d.tobytes() == f_r.tobytes()


def test_encode_prompt_deterministic_and_context_sensitive(vocab):
    enc = TextEncoder(width=16, heads=2)
    a = encode_prompt(vocab.tokenize("a photo of a circle"), vocab, enc).data
    b = encode_prompt(vocab.tokenize("a photo of a circle"), vocab, enc).data
    c = encode_prompt(vocab.tokenize("a photo of a square"), vocab, enc).data
    assert a.tobytes() == b.tobytes()
    assert not np.array_equal(a, c)
    # causal mask: positions before the category slot are unaffected
    np.testing.assert_array_equal(a[:5], c[:5])


def test_encode_prompt_length_mismatch(vocab):
    enc = TextEncoder(width=16, heads=2)
    with pytest.raises(ValueError):
        encode_prompt(np.zeros(8, dtype=int), vocab, enc)


def test_concept_gradient_matches_finite_differences():
    with precision(np.float64):
        vocab = Vocab.build(corpus_words(CATS), dim=16)
        vocab.embeddings = vocab.embeddings.astype(np.float64)
        enc = TextEncoder(width=16, heads=2, seed=3)
        enc.freeze()
        cid = vocab.extend(CATS[0])
        ids = vocab.tokenize(vocab.prompt_pair(CATS[0])[1])
        probe = np.random.default_rng(0).normal(size=(16, 16))
        vec = Tensor(vocab.embeddings[cid].copy(), requires_grad=True)

        def f():
            return ops.sum(encode_prompt(ids, vocab, enc, overrides={cid: vec}) * probe)

        with record():
            loss = f()
        backward(loss)
        num = numeric_grad(lambda: f().data, vec.data, h=1e-5)
        assert max_relative_error(vec.grad, num, floor=1e-6) < 1e-3
        # frozen encoder weights received nothing
        assert all(p.grad is None for p in enc.parameters())


def _toy_data(n_per=6, K=2, seed=0):
    rng = np.random.default_rng(seed)
    images = rng.uniform(-1, 1, size=(n_per * K, 64, 64, 3)).astype(np.float32)
    labels = np.repeat(np.arange(K), n_per)
    return images, labels


def test_contrastive_needs_two_categories():
    vocab = Vocab.build(corpus_words(CATS[:1]), dim=64)
    dual = DualEncoder(vocab, TextEncoder(), ImageEncoder())
    images, labels = _toy_data(K=1)
    with pytest.raises(ValueError):
        contrastive_pretrain(images, labels, CATS[:1], dual, ContrastiveConfig(steps=1))


def test_contrastive_lr_zero_leaves_params_unchanged():
    vocab = Vocab.build(corpus_words(CATS[:2]), dim=64)
    dual = DualEncoder(vocab, TextEncoder(), ImageEncoder())
    before = {k: v.copy() for k, v in dual.text.state_dict().items()}
    before.update({"img." + k: v.copy() for k, v in dual.image.state_dict().items()})
    table = vocab.embeddings.copy()
    images, labels = _toy_data()
    contrastive_pretrain(images, labels, CATS[:2], dual, ContrastiveConfig(steps=1, lr=0.0))
    after = dict(dual.text.state_dict())
    after.update({"img." + k: v for k, v in dual.image.state_dict().items()})
    for k in before:
        np.testing.assert_array_equal(before[k], after[k])
    np.testing.assert_array_equal(table, dual.vocab.embeddings)


@pytest.mark.parametrize("B", [4, 8, 16])
def test_initial_loss_is_about_log_batch(B):
    cats = [f"thing{i}" for i in range(B)]
    vocab = Vocab.build(corpus_words(cats), dim=64)
    dual = DualEncoder(vocab, TextEncoder(), ImageEncoder())
    rng = np.random.default_rng(1)
    images = rng.uniform(-1, 1, size=(B, 64, 64, 3)).astype(np.float32)
    ids = np.stack([vocab.tokenize(f"a photo of a {c}") for c in cats])
    _, i2t, t2i = contrastive_loss(dual.image_features(images), dual.text_features(ids), dual.log_scale)
    for direction in (i2t, t2i):
        assert abs(float(direction.data) - math.log(B)) < 0.1 * math.log(B)


def test_vocab_serialization_round_trip(vocab):
    vocab.extend(CATS[1])
    back = Vocab.from_dict(vocab.to_dict(), vocab.embeddings)
    assert back.tokens == vocab.tokens
    assert back.concepts == vocab.concepts
    np.testing.assert_array_equal(back.trainable, vocab.trainable)
