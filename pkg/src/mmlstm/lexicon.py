"""Subword embedding table: file loading, greedy longest-match tokenization,
and word-to-vector resolution for similarity scoring.

The embedding file format is plain UTF-8 text: the first significant line is
``<vocab_size> <dim>``, each following line is ``piece v1 ... v_dim``.  Lines
that are blank or start with ``#`` are skipped.  Pieces may not contain
whitespace.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

PAD_PIECE = "<pad>"
BOS_PIECE = "<s>"
EOS_PIECE = "</s>"
UNK_PIECE = "<unk>"
SPECIAL_PIECES = (PAD_PIECE, BOS_PIECE, EOS_PIECE, UNK_PIECE)


class EmbeddingFormatError(ValueError):
    """Malformed embedding file; carries the 1-based offending line number."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


@dataclass
class EmbeddingTable:
    """Immutable piece inventory plus one dense vector per piece.

    The four special pieces are always present; ``vectors`` has one row per
    piece in ``pieces`` order.
    """

    pieces: list[str]
    vectors: np.ndarray  # (|V|, dim) float64
    dim: int
    piece_to_id: dict[str, int] = field(repr=False)
    pad_id: int = 0
    bos_id: int = 0
    eos_id: int = 0
    unk_id: int = 0
    # longest non-special piece, bounds the greedy matcher's window
    max_piece_len: int = 1

    def __len__(self) -> int:
        return len(self.pieces)

    def id_of(self, piece: str) -> int:
        """Vocabulary id of a piece, or the UNK id if absent."""
        return self.piece_to_id.get(piece, self.unk_id)

    def decode(self, ids: list[int], skip_specials: bool = True) -> str:
        specials = {self.pad_id, self.bos_id, self.eos_id}
        out = []
        for i in ids:
            if skip_specials and i in specials:
                continue
            out.append(self.pieces[i])
        return " ".join(out)


@dataclass
class TokenSequence:
    ids: list[int]
    source_text: str


def _build_table(pieces: list[str], vectors: np.ndarray) -> EmbeddingTable:
    piece_to_id = {p: i for i, p in enumerate(pieces)}
    non_special = [p for p in pieces if p not in SPECIAL_PIECES]
    return EmbeddingTable(
        pieces=pieces,
        vectors=vectors,
        dim=vectors.shape[1],
        piece_to_id=piece_to_id,
        pad_id=piece_to_id[PAD_PIECE],
        bos_id=piece_to_id[BOS_PIECE],
        eos_id=piece_to_id[EOS_PIECE],
        unk_id=piece_to_id[UNK_PIECE],
        max_piece_len=max((len(p) for p in non_special), default=1),
    )


def load_embeddings(path: str) -> EmbeddingTable:
    """Load an embedding table from the documented text format.

    Missing special pieces are appended with zero vectors.  Raises
    :class:`EmbeddingFormatError` (with line number) on malformed header,
    wrong arity, duplicate piece, or non-finite value.
    """
    with open(path, encoding="utf-8") as f:
        raw = f.readlines()

    lines = [
        (no, ln.strip())
        for no, ln in enumerate(raw, start=1)
        if ln.strip() and not ln.lstrip().startswith("#")
    ]
    if not lines:
        raise EmbeddingFormatError("malformed header: file is empty", line=1)

    head_no, head = lines[0]
    parts = head.split()
    if len(parts) != 2:
        raise EmbeddingFormatError(f"malformed header: {head!r}", line=head_no)
    try:
        vocab_size, dim = int(parts[0]), int(parts[1])
    except ValueError:
        raise EmbeddingFormatError(f"malformed header: {head!r}", line=head_no) from None
    if vocab_size < 0 or dim < 1:
        raise EmbeddingFormatError(f"malformed header: {head!r}", line=head_no)

    body = lines[1:]
    if len(body) != vocab_size:
        raise EmbeddingFormatError(
            f"header declares {vocab_size} pieces but file has {len(body)}",
            line=head_no,
        )

    pieces: list[str] = []
    seen: dict[str, int] = {}
    vectors = np.empty((vocab_size, dim), dtype=np.float64)
    for row, (no, ln) in enumerate(body):
        cols = ln.split()
        if len(cols) != dim + 1:
            raise EmbeddingFormatError(
                f"expected piece + {dim} values, got {len(cols)} fields", line=no
            )
        piece = cols[0]
        if piece in seen:
            raise EmbeddingFormatError(f"duplicate piece {piece!r}", line=no)
        seen[piece] = row
        try:
            vec = np.array([float(v) for v in cols[1:]], dtype=np.float64)
        except ValueError:
            raise EmbeddingFormatError(f"unparsable value in {piece!r} row", line=no) from None
        if not np.all(np.isfinite(vec)):
            raise EmbeddingFormatError(f"non-finite value in {piece!r} row", line=no)
        pieces.append(piece)
        vectors[row] = vec

    missing = [p for p in SPECIAL_PIECES if p not in seen]
    if missing:
        pieces = pieces + missing
        vectors = np.vstack([vectors, np.zeros((len(missing), dim))])
    return _build_table(pieces, vectors)


def save_embeddings(table: EmbeddingTable, path: str) -> None:
    """Write a table back out; values use 9 significant digits so that
    load -> save -> load is the identity on (pieces, vectors)."""
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"{len(table)} {table.dim}\n")
        for piece, vec in zip(table.pieces, table.vectors):
            f.write(piece + " " + " ".join(f"{v:.9g}" for v in vec) + "\n")


def tokenize(text: str, table: EmbeddingTable) -> TokenSequence:
    """Greedy longest-match segmentation of lowercased, whitespace-split text.

    Each word is scanned left to right, always taking the longest piece in the
    inventory that matches at the current position; every maximal span that no
    piece covers becomes a single UNK.  Special pieces never match inside
    text.  Result is BOS + pieces + EOS.
    """
    ids = [table.bos_id]
    for word in text.lower().split():
        ids.extend(_segment_word(word, table))
    ids.append(table.eos_id)
    return TokenSequence(ids=ids, source_text=text)


def _segment_word(word: str, table: EmbeddingTable) -> list[int]:
    out: list[int] = []
    i = 0
    in_gap = False
    while i < len(word):
        match = None
        for end in range(min(len(word), i + table.max_piece_len), i, -1):
            cand = word[i:end]
            if cand in SPECIAL_PIECES:
                continue
            pid = table.piece_to_id.get(cand)
            if pid is not None:
                match = (pid, end)
                break
        if match is None:
            if not in_gap:
                out.append(table.unk_id)
                in_gap = True
            i += 1
        else:
            out.append(match[0])
            i = match[1]
            in_gap = False
    return out


def word_vector(
    word: str,
    table: EmbeddingTable,
    side: str = "output",
    model=None,
    mode: str = "single-token",
) -> np.ndarray | None:
    """Resolve a whole word to a vector, or None if the word must be dropped.

    side="input" reads the embedding table, side="output" reads the trained
    model's output-projection rows.  In single-token mode a word resolves only
    when it tokenizes to exactly one non-UNK piece; in average mode the mean
    of the non-UNK piece rows is returned, absent only when every piece is
    UNK.
    """
    if side == "input":
        rows = table.vectors
    elif side == "output":
        if model is None:
            raise ValueError("side='output' requires a trained model")
        rows = model.out_w if hasattr(model, "out_w") else np.asarray(model)
        if rows.shape[0] != len(table):
            raise ValueError(
                f"output rows ({rows.shape[0]}) do not match vocabulary ({len(table)})"
            )
    else:
        raise ValueError(f"unknown side {side!r}")

    interior = tokenize(word, table).ids[1:-1]
    if mode == "single-token":
        if len(interior) != 1 or interior[0] == table.unk_id:
            return None
        return np.array(rows[interior[0]], dtype=np.float64)
    if mode == "average":
        kept = [i for i in interior if i != table.unk_id]
        if not kept:
            return None
        return np.mean(rows[kept], axis=0, dtype=np.float64)
    raise ValueError(f"unknown mode {mode!r}")
