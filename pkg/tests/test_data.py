import numpy as np
import pytest

from mmlstm.data import (
    CaptionFormatError,
    CaptionRecord,
    FeatureFormatError,
    load_captions,
    load_features,
    make_batches,
    save_captions,
    save_features,
    split_corpus,
    FeatureStore,
)
from mmlstm.lexicon import load_embeddings


@pytest.fixture
def table(tmp_path):
    path = tmp_path / "emb.txt"
    path.write_text("4 2\na 1 0\nun 0 1\nperro 1 1\ndog 2 0\n", encoding="utf-8")
    return load_embeddings(str(path))


def test_load_captions_single_record(tmp_path):
    path = tmp_path / "caps.jsonl"
    path.write_text('{"image_id":"i1","lang":"es","text":"un perro"}\n', encoding="utf-8")
    records = load_captions(str(path))
    assert records == [CaptionRecord(image_id="i1", lang="es", text="un perro")]


def test_load_captions_unknown_lang(tmp_path):
    path = tmp_path / "caps.jsonl"
    path.write_text('{"image_id":"i1","lang":"fr","text":"un chien"}\n', encoding="utf-8")
    with pytest.raises(CaptionFormatError, match="unknown lang") as exc:
        load_captions(str(path))
    assert exc.value.line == 1


def test_load_captions_missing_field(tmp_path):
    path = tmp_path / "caps.jsonl"
    path.write_text('{"image_id":"i1","lang":"en"}\n', encoding="utf-8")
    with pytest.raises(CaptionFormatError, match="missing field 'text'"):
        load_captions(str(path))


def test_load_captions_empty_file(tmp_path):
    path = tmp_path / "caps.jsonl"
    path.write_text("", encoding="utf-8")
    assert load_captions(str(path)) == []


def test_captions_roundtrip(tmp_path):
    records = [
        CaptionRecord("i1", "en", "a dog"),
        CaptionRecord("i1", "es", "un perro"),
    ]
    path = tmp_path / "caps.jsonl"
    save_captions(records, str(path))
    assert load_captions(str(path)) == records


def test_load_features_basic(tmp_path):
    path = tmp_path / "f.gfeat"
    path.write_text("GFEAT1 1 3\ni1 0 0 1\n", encoding="utf-8")
    store = load_features(str(path))
    assert store.dim == 3
    np.testing.assert_array_equal(store.map["i1"], [0, 0, 1])


@pytest.mark.parametrize(
    "content,match",
    [
        ("GFEAT1 2 2\ni1 0 1\ni1 1 0\n", "duplicate image_id"),
        ("GFEAT1 2 2\ni1 0 1\n", "declares 2 entries"),
        ("GFEAT1 1 3\ni1 0 1\n", "got 3 fields"),
        ("NOPE 1 2\ni1 0 1\n", "malformed header"),
        ("GFEAT1 1 2\ni1 inf 1\n", "non-finite"),
    ],
)
def test_load_features_errors(tmp_path, content, match):
    path = tmp_path / "f.gfeat"
    path.write_text(content, encoding="utf-8")
    with pytest.raises(FeatureFormatError, match=match):
        load_features(str(path))


def test_features_roundtrip_with_comments(tmp_path):
    store = FeatureStore(dim=2, map={"a": np.array([0.25, -1.5]), "b": np.array([1.0, 2.0])})
    path = tmp_path / "f.gfeat"
    save_features(store, str(path), comments=["backbone tiny-cnn", "resize 32"])
    again = load_features(str(path))
    assert again.dim == 2
    for key in store.map:
        np.testing.assert_array_equal(again.map[key], store.map[key])


def corpus_records(n_images, per_image=2):
    records = []
    for i in range(n_images):
        for k in range(per_image):
            records.append(CaptionRecord(f"img{i}", "en" if k % 2 == 0 else "es", f"a dog"))
    return records


def test_split_sizes_80_10_10():
    records = corpus_records(100)
    train, valid, test = split_corpus(records, seed=3)
    assert len({r.image_id for r in train}) == 80
    assert len({r.image_id for r in valid}) == 10
    assert len({r.image_id for r in test}) == 10


def test_split_single_image_goes_to_train():
    records = corpus_records(1)
    train, valid, test = split_corpus(records, seed=0)
    assert len(train) == 2 and not valid and not test


def test_split_deterministic_and_disjoint():
    records = corpus_records(37)
    a = split_corpus(records, seed=11)
    b = split_corpus(records, seed=11)
    assert a == b
    ids = [set(r.image_id for r in part) for part in a]
    assert not (ids[0] & ids[1]) and not (ids[0] & ids[2]) and not (ids[1] & ids[2])
    assert ids[0] | ids[1] | ids[2] == {r.image_id for r in records}
    c = split_corpus(records, seed=12)
    assert c != a  # seed actually matters at this size


def test_split_keeps_captions_of_one_image_together():
    records = corpus_records(20, per_image=4)
    for part in split_corpus(records, seed=5):
        for r in part:
            assert sum(1 for q in part if q.image_id == r.image_id) == 4


def test_make_batches_packing_example(table):
    # caption "a" -> [BOS, a, EOS]; B=1, T=4
    records = [CaptionRecord("i1", "en", "a")]
    store = FeatureStore(dim=2, map={"i1": np.array([0.5, 0.25])})
    (batch,) = make_batches(records, table, store, batch_size=1, seq_len=4, seed=0)
    a_id = table.piece_to_id["a"]
    np.testing.assert_array_equal(
        batch.token_ids[0], [table.bos_id, a_id, table.eos_id, table.pad_id]
    )
    np.testing.assert_array_equal(
        batch.targets[0], [a_id, table.eos_id, table.pad_id, table.pad_id]
    )
    np.testing.assert_array_equal(batch.mask[0], [True, True, False, False])
    np.testing.assert_array_equal(batch.visual[0], [0.5, 0.25])


def test_make_batches_unimodal_zero_visual(table):
    records = [CaptionRecord("i1", "en", "a")]
    (batch,) = make_batches(records, table, None, 1, 4, seed=0, visual_dim=3)
    np.testing.assert_array_equal(batch.visual, np.zeros((1, 3)))


def test_make_batches_truncation_keeps_eos(table):
    records = [CaptionRecord("i1", "en", "a " * 10)]
    (batch,) = make_batches(records, table, None, 1, 4, seed=0)
    assert batch.token_ids[0, -1] != table.eos_id  # input row is full
    assert batch.targets[0, -1] == table.eos_id  # last target forced to EOS
    assert batch.mask[0].all()


def test_make_batches_missing_feature_errors(table):
    records = [CaptionRecord("iX", "en", "a")]
    store = FeatureStore(dim=2, map={"i1": np.array([1.0, 0.0])})
    with pytest.raises(KeyError, match="iX"):
        make_batches(records, table, store, 1, 4, seed=0)


def test_mask_bit_total_invariant_under_shuffle(table):
    rng = np.random.default_rng(0)
    words = ["a", "un", "perro", "dog"]
    records = [
        CaptionRecord(f"img{i}", "en", " ".join(rng.choice(words, size=rng.integers(1, 9))))
        for i in range(23)
    ]
    def total_mask(seed):
        batches = make_batches(records, table, None, 4, 6, seed=seed)
        return sum(int(b.mask.sum()) for b in batches)

    expected = 0
    for r in records:
        n_interior = len(r.text.split())
        expected += min(n_interior + 1, 6)  # +1 for EOS target, truncated at T
    assert total_mask(1) == total_mask(2) == total_mask(99) == expected


def test_targets_are_shifted_inputs_where_masked(table):
    rng = np.random.default_rng(4)
    words = ["a", "un", "perro", "dog"]
    records = [
        CaptionRecord(f"img{i}", "es", " ".join(rng.choice(words, size=rng.integers(1, 12))))
        for i in range(17)
    ]
    for batch in make_batches(records, table, None, 5, 7, seed=8):
        b, t = batch.token_ids.shape
        for i in range(b):
            for j in range(t):
                if batch.mask[i, j] and j + 1 < t:
                    assert batch.targets[i, j] == batch.token_ids[i, j + 1]
                if not batch.mask[i, j]:
                    assert batch.targets[i, j] == table.pad_id


def test_visual_rows_match_feature_store(table):
    rng = np.random.default_rng(9)
    records = [CaptionRecord(f"img{i}", "en", "a dog") for i in range(9)]
    store = FeatureStore(dim=3, map={f"img{i}": rng.normal(size=3) for i in range(9)})
    seen = 0
    for batch in make_batches(records, table, store, 2, 5, seed=3):
        for row in range(batch.token_ids.shape[0]):
            matches = [
                iid for iid, vec in store.map.items()
                if np.array_equal(batch.visual[row], vec)
            ]
            assert len(matches) == 1
            seen += 1
    assert seen == 9
