import json

import numpy as np
import pytest

from promptloc.data import (
    DEFAULT_CATEGORIES,
    ManifestError,
    ManifestVersionError,
    SyntheticConfig,
    UntrainedEncoderError,
    classify,
    generate_synthetic,
    load_manifest,
    rank_scores,
    render_image,
    save_manifest,
)
from promptloc.data.synthetic import shape_mask
from promptloc.text import corpus_words, select_meta_token

SMALL = dict(train_per_category=3, test_per_category=2)


@pytest.fixture(scope="module")
def small_set(tmp_path_factory):
    out = tmp_path_factory.mktemp("ds")
    m = generate_synthetic(SyntheticConfig(**SMALL), seed=5, out_dir=out)
    save_manifest(m, out / "manifest.jsonl")
    return out, m


def test_default_scale():
    cfg = SyntheticConfig()
    assert len(cfg.categories) == 8
    assert (cfg.train_per_category, cfg.test_per_category, cfg.image_size) == (200, 50, 64)
    assert any("," in c for c in cfg.categories)


def test_generation_is_byte_identical(tmp_path, small_set):
    out, m = small_set
    m2 = generate_synthetic(SyntheticConfig(**SMALL), seed=5, out_dir=tmp_path)
    save_manifest(m2, tmp_path / "manifest.jsonl")
    assert (out / "manifest.jsonl").read_bytes() == (tmp_path / "manifest.jsonl").read_bytes()
    for r in m.records:
        assert (out / r.path).read_bytes() == (tmp_path / r.path).read_bytes()


def test_splits_disjoint_and_complete(small_set):
    _, m = small_set
    train = {r.image_id for r in m.split("train")}
    test = {r.image_id for r in m.split("test")}
    assert not train & test
    assert len(train) == 8 * 3 and len(test) == 8 * 2
    m.validate()


def test_captions_and_meta_tokens(small_set):
    _, m = small_set
    vocab_words = corpus_words(m.categories)
    for r in m.records:
        assert r.caption == "a photo of a " + r.category.split(",")[0].strip().lower()
        assert select_meta_token(r.category) in vocab_words


@pytest.mark.parametrize("shape", ["circle", "square", "triangle", "ring", "cross", "diamond"])
@pytest.mark.parametrize("size", [12, 19, 32])
def test_shape_masks_are_nonempty(shape, size):
    m = shape_mask(shape, size)
    assert m.shape == (size, size) and m.dtype == bool
    assert m.sum() >= size


def test_boxes_tightly_bound_the_object():
    cfg = SyntheticConfig(distractor_rate=0.0, multi_instance_rate=0.0, texture_amplitude=0.0, color_jitter=0.0)
    for i, cat in enumerate(cfg.categories):
        pixels, boxes, _ = render_image(cfg, cat, np.random.default_rng(i))
        # with no texture the background is a flat colour drawn first from the same stream
        base = np.random.default_rng(i).uniform(0.35, 0.65, size=3)
        bg = (base * 255.0 + 0.5).astype(np.uint8)
        ys, xs = np.nonzero(np.any(pixels != bg, axis=-1))
        assert boxes == [[int(xs.min()), int(ys.min()), int(xs.max()) + 1, int(ys.max()) + 1]]


def test_requires_two_categories(tmp_path):
    cfg = SyntheticConfig(categories={"cross": ("cross", (1.0, 0.0, 0.0))})
    with pytest.raises(ValueError):
        generate_synthetic(cfg, 0, tmp_path)


def test_manifest_round_trip(small_set):
    out, m = small_set
    back = load_manifest(out / "manifest.jsonl")
    assert back == m
    assert back.load_images(back.records[:2]).shape == (2, 64, 64, 3)


def _rewrite(src, dst, header_edit=None, record_edit=None):
    lines = src.read_text().splitlines()
    header = json.loads(lines[0])
    if header_edit:
        header_edit(header)
    recs = [json.loads(x) for x in lines[1:]]
    if record_edit:
        record_edit(recs)
    dst.write_text("\n".join([json.dumps(header)] + [json.dumps(r) for r in recs]) + "\n")


def test_unknown_schema_version(small_set, tmp_path):
    out, _ = small_set
    _rewrite(out / "manifest.jsonl", tmp_path / "m.jsonl", header_edit=lambda h: h.update(version=9))
    with pytest.raises(ManifestVersionError, match="version 9"):
        load_manifest(tmp_path / "m.jsonl")


def test_out_of_bounds_box_rejected_with_line(small_set, tmp_path):
    out, _ = small_set

    def edit(recs):
        recs[3]["boxes"] = [[10, 10, 70, 20]]

    _rewrite(out / "manifest.jsonl", tmp_path / "m.jsonl", record_edit=edit)
    with pytest.raises(ManifestError, match=r"m\.jsonl:5"):
        load_manifest(tmp_path / "m.jsonl")


def test_malformed_record_reports_line(small_set, tmp_path):
    out, _ = small_set
    lines = (out / "manifest.jsonl").read_text().splitlines()
    lines[2] = '{"image_id": "x"'
    (tmp_path / "m.jsonl").write_text("\n".join(lines) + "\n")
    with pytest.raises(ManifestError, match=r"m\.jsonl:3"):
        load_manifest(tmp_path / "m.jsonl")


def test_classify_requires_training(tiny, images):
    with pytest.raises(UntrainedEncoderError):
        classify(images, tiny.dual, tiny.categories)


def test_classify_two_categories(tiny, images):
    tiny.dual.trained = True
    ranked = classify(images, tiny.dual, tiny.categories[:2])
    assert ranked.shape == (3, 2)
    for row in ranked:
        assert sorted(row) == [0, 1]


def test_rank_is_invariant_to_monotone_rescaling():
    rng = np.random.default_rng(0)
    s = rng.normal(size=(20, 8))
    base = rank_scores(s)
    assert base.shape == (20, 5)
    np.testing.assert_array_equal(rank_scores(np.exp(3 * s) + 2), base)
    np.testing.assert_array_equal(base[:, 0], s.argmax(axis=1))


def test_default_category_strings_parse():
    for c in DEFAULT_CATEGORIES:
        assert select_meta_token(c)
