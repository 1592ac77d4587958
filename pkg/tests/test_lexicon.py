import numpy as np
import pytest

from mmlstm.lexicon import (
    EmbeddingFormatError,
    SPECIAL_PIECES,
    load_embeddings,
    save_embeddings,
    tokenize,
    word_vector,
)


def write(tmp_path, text, name="emb.txt"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


def test_load_basic(tmp_path):
    path = write(tmp_path, "2 3\nun 1 0 0\na 0 1 0\n")
    table = load_embeddings(path)
    assert len(table) == 6  # 2 pieces + 4 appended specials
    assert table.dim == 3
    assert table.pieces[:2] == ["un", "a"]
    np.testing.assert_array_equal(table.vectors[0], [1, 0, 0])
    for sp in SPECIAL_PIECES:
        np.testing.assert_array_equal(table.vectors[table.piece_to_id[sp]], [0, 0, 0])


def test_specials_not_duplicated(tmp_path):
    path = write(tmp_path, "2 2\n<unk> 1 1\nfoo 2 2\n")
    table = load_embeddings(path)
    assert len(table) == 5  # <unk> present, 3 appended
    np.testing.assert_array_equal(table.vectors[table.unk_id], [1, 1])


def test_empty_file_is_malformed_header(tmp_path):
    with pytest.raises(EmbeddingFormatError, match="malformed header"):
        load_embeddings(write(tmp_path, ""))


@pytest.mark.parametrize(
    "content,match,line",
    [
        ("1 3\na 1 0\n", "got 3 fields", 2),
        ("2 2\na 1 0\na 0 1\n", "duplicate piece", 3),
        ("1 2\na 1 nan\n", "non-finite", 2),
        ("1 2\na 1 xyz\n", "unparsable", 2),
        ("x y\n", "malformed header", 1),
        ("2 2\na 1 0\n", "declares 2 pieces", 1),
    ],
)
def test_format_errors_carry_line_numbers(tmp_path, content, match, line):
    with pytest.raises(EmbeddingFormatError, match=match) as exc:
        load_embeddings(write(tmp_path, content))
    assert exc.value.line == line


def test_comment_and_blank_lines_skipped(tmp_path):
    path = write(tmp_path, "# provenance note\n\n1 2\nfoo 1 2\n")
    assert len(load_embeddings(path)) == 5


def test_roundtrip_identity(tmp_path):
    rng = np.random.default_rng(0)
    body = "\n".join(
        f"p{i} " + " ".join(f"{v:.9g}" for v in rng.normal(size=4)) for i in range(10)
    )
    table = load_embeddings(write(tmp_path, f"10 4\n{body}\n"))
    out = str(tmp_path / "copy.txt")
    save_embeddings(table, out)
    again = load_embeddings(out)
    assert again.pieces == table.pieces
    np.testing.assert_array_equal(again.vectors, table.vectors)


@pytest.fixture
def small_table(tmp_path):
    return load_embeddings(
        write(tmp_path, "4 2\na 1 0\nun 0 1\nbird 1 1\nx 2 2\n", "small.txt")
    )


def test_tokenize_single_word(small_table):
    t = small_table
    assert tokenize("a", t).ids == [t.bos_id, t.piece_to_id["a"], t.eos_id]


def test_tokenize_unknown_word_is_single_unk(small_table):
    t = small_table
    assert tokenize("qqqq", t).ids == [t.bos_id, t.unk_id, t.eos_id]


def greedy_oracle(word, pieces):
    """Pick from all segmentations the one where the longest match wins at
    every position, scanning left to right; gaps are single-char markers."""

    def segmentations(rest):
        if not rest:
            return [[]]
        out = []
        for end in range(1, len(rest) + 1):
            head = rest[:end]
            if head in pieces:
                out.extend([head] + tail for tail in segmentations(rest[end:]))
        out.extend([rest[0] + "?"] + tail for tail in segmentations(rest[1:]))
        return out

    def piece_len(seg):
        # longer pieces first, marker gaps count as length 0
        return tuple(-(len(p) if not p.endswith("?") else 0) for p in seg)

    return min(segmentations(word), key=piece_len)


def test_tokenize_longest_match_matches_enumeration_oracle(small_table):
    t = small_table
    oracle = greedy_oracle("unbird", {"a", "un", "bird", "x"})
    assert oracle == ["un", "bird"]
    assert tokenize("unbird", t).ids == [
        t.bos_id, t.piece_to_id["un"], t.piece_to_id["bird"], t.eos_id,
    ]


def test_tokenize_gap_between_matches(small_table):
    t = small_table
    # "aZZun": piece, uncovered span, piece
    ids = tokenize("azzun", t).ids[1:-1]
    assert ids == [t.piece_to_id["a"], t.unk_id, t.piece_to_id["un"]]


def test_tokenize_is_case_and_whitespace_insensitive(small_table):
    t = small_table
    assert tokenize("  A \t UN ", t).ids == tokenize("a un", t).ids


def test_all_ids_in_vocab_range(small_table):
    t = small_table
    rng = np.random.default_rng(5)
    alphabet = "abirdunxq "
    for _ in range(200):
        text = "".join(rng.choice(list(alphabet), size=12))
        ids = tokenize(text, t).ids
        assert all(0 <= i < len(t) for i in ids)


def test_roundtrip_in_vocab_text(small_table):
    t = small_table
    text = "a un bird x"
    once = tokenize(text, t)
    again = tokenize(t.decode(once.ids), t)
    assert once.ids == again.ids


def test_word_vector_single_token(small_table):
    t = small_table
    np.testing.assert_array_equal(word_vector("a", t, side="input"), [1, 0])
    assert word_vector("unbird", t, side="input") is None  # two pieces
    assert word_vector("qqqq", t, side="input") is None  # UNK


def test_word_vector_absence_iff_not_single_piece(small_table):
    t = small_table
    for word in ["a", "un", "bird", "x", "unbird", "qq", "axx", "birdun"]:
        interior = tokenize(word, t).ids[1:-1]
        expected_absent = len(interior) != 1 or interior[0] == t.unk_id
        assert (word_vector(word, t, side="input") is None) == expected_absent


def test_word_vector_average_mode(small_table):
    t = small_table
    vec = word_vector("unbird", t, side="input", mode="average")
    np.testing.assert_allclose(vec, [0.5, 1.0])  # mean of [0,1] and [1,1]
    assert word_vector("qqq", t, side="input", mode="average") is None


def test_word_vector_output_side_reads_projection_rows(small_table):
    t = small_table
    rows = np.arange(len(t) * 3, dtype=float).reshape(len(t), 3)
    vec = word_vector("a", t, side="output", model=rows)
    np.testing.assert_array_equal(vec, rows[t.piece_to_id["a"]])
    with pytest.raises(ValueError, match="requires a trained model"):
        word_vector("a", t, side="output")
