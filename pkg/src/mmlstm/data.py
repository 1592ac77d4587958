"""Caption and image-feature ingestion, image-level corpus splitting, and
fixed-length masked batch packing.

Captions are line-delimited JSON records with fields image_id/lang/text.
Features use the ``GFEAT1`` text format: header ``GFEAT1 <count> <dim>``,
then one ``image_id v1 ... v_dim`` line per image.  Blank lines and lines
starting with ``#`` are skipped in both files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .lexicon import EmbeddingTable, tokenize

LANGS = ("en", "es")


class CaptionFormatError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class FeatureFormatError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


@dataclass
class CaptionRecord:
    image_id: str
    lang: str
    text: str


@dataclass
class FeatureStore:
    """image_id -> visual context vector, all of one dimension."""

    dim: int
    map: dict[str, np.ndarray]

    def __len__(self) -> int:
        return len(self.map)


@dataclass
class Batch:
    """One packed training batch: one caption per row, states reset per row.

    ``targets`` is ``token_ids`` shifted left by one; ``mask`` is true exactly
    on real (non-padding) target positions.  ``visual`` holds one feature row
    per caption (all zeros in unimodal mode).
    """

    token_ids: np.ndarray  # (B, T) int64
    targets: np.ndarray  # (B, T) int64
    mask: np.ndarray  # (B, T) bool
    visual: np.ndarray  # (B, d_vis) float64


def _significant_lines(path: str):
    with open(path, encoding="utf-8") as f:
        for no, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            yield no, line


def load_captions(path: str) -> list[CaptionRecord]:
    """Parse a caption file into records, in file order."""
    records = []
    for no, line in _significant_lines(path):
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise CaptionFormatError(f"invalid record: {e.msg}", line=no) from None
        if not isinstance(obj, dict):
            raise CaptionFormatError("record is not an object", line=no)
        for key in ("image_id", "lang", "text"):
            if key not in obj:
                raise CaptionFormatError(f"missing field {key!r}", line=no)
        if not obj["image_id"]:
            raise CaptionFormatError("empty image_id", line=no)
        if obj["lang"] not in LANGS:
            raise CaptionFormatError(f"unknown lang {obj['lang']!r}", line=no)
        records.append(
            CaptionRecord(image_id=str(obj["image_id"]), lang=obj["lang"], text=str(obj["text"]))
        )
    return records


def save_captions(records: list[CaptionRecord], path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for r in records:
            f.write(
                json.dumps(
                    {"image_id": r.image_id, "lang": r.lang, "text": r.text},
                    ensure_ascii=False,
                    sort_keys=True,
                )
                + "\n"
            )


def load_features(path: str) -> FeatureStore:
    """Parse a GFEAT1 feature file."""
    lines = list(_significant_lines(path))
    if not lines:
        raise FeatureFormatError("missing GFEAT1 header", line=1)
    head_no, head = lines[0]
    parts = head.split()
    if len(parts) != 3 or parts[0] != "GFEAT1":
        raise FeatureFormatError(f"malformed header: {head!r}", line=head_no)
    try:
        count, dim = int(parts[1]), int(parts[2])
    except ValueError:
        raise FeatureFormatError(f"malformed header: {head!r}", line=head_no) from None
    if count < 0 or dim < 1:
        raise FeatureFormatError(f"malformed header: {head!r}", line=head_no)

    body = lines[1:]
    if len(body) != count:
        raise FeatureFormatError(
            f"header declares {count} entries but file has {len(body)}", line=head_no
        )
    store: dict[str, np.ndarray] = {}
    for no, line in body:
        cols = line.split()
        if len(cols) != dim + 1:
            raise FeatureFormatError(
                f"expected image_id + {dim} values, got {len(cols)} fields", line=no
            )
        image_id = cols[0]
        if image_id in store:
            raise FeatureFormatError(f"duplicate image_id {image_id!r}", line=no)
        try:
            vec = np.array([float(v) for v in cols[1:]], dtype=np.float64)
        except ValueError:
            raise FeatureFormatError(f"unparsable value for {image_id!r}", line=no) from None
        if not np.all(np.isfinite(vec)):
            raise FeatureFormatError(f"non-finite value for {image_id!r}", line=no)
        store[image_id] = vec
    return FeatureStore(dim=dim, map=store)


def save_features(store: FeatureStore, path: str, comments: list[str] | None = None) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for c in comments or []:
            f.write(f"# {c}\n")
        f.write(f"GFEAT1 {len(store.map)} {store.dim}\n")
        for image_id in store.map:
            vec = store.map[image_id]
            f.write(image_id + " " + " ".join(f"{v:.9g}" for v in vec) + "\n")


def split_corpus(
    records: list[CaptionRecord], seed: int
) -> tuple[list[CaptionRecord], list[CaptionRecord], list[CaptionRecord]]:
    """80/10/10 split by image_id so no image's captions leak across splits.

    Image ids (in first-appearance order) are shuffled by a seeded RNG; valid
    and test each take floor(n/10) ids off the end and train keeps the rest,
    so a tiny corpus degenerates to train-only.  Records keep file order
    within splits.
    """
    if not records:
        raise ValueError("cannot split an empty record list")
    ids: list[str] = []
    seen = set()
    for r in records:
        if r.image_id not in seen:
            seen.add(r.image_id)
            ids.append(r.image_id)
    rng = np.random.Generator(np.random.PCG64(seed))
    order = rng.permutation(len(ids))
    shuffled = [ids[i] for i in order]
    n = len(shuffled)
    tenth = n // 10
    cut80, cut90 = n - 2 * tenth, n - tenth
    train_ids = set(shuffled[:cut80])
    valid_ids = set(shuffled[cut80:cut90])
    train = [r for r in records if r.image_id in train_ids]
    valid = [r for r in records if r.image_id in valid_ids]
    test = [r for r in records if r.image_id not in train_ids and r.image_id not in valid_ids]
    return train, valid, test


def encode_caption(record: CaptionRecord, table: EmbeddingTable, max_len: int) -> list[int]:
    """Tokenize to BOS..EOS ids, truncated to max_len with EOS kept last."""
    ids = tokenize(record.text, table).ids
    if len(ids) > max_len:
        ids = ids[:max_len]
        ids[-1] = table.eos_id
    return ids


def make_batches(
    records: list[CaptionRecord],
    table: EmbeddingTable,
    store: FeatureStore | None,
    batch_size: int,
    seq_len: int,
    seed: int,
    visual_dim: int | None = None,
) -> list[Batch]:
    """Shuffle records with a seeded RNG and pack them into masked batches.

    Each caption becomes one row (truncated to seq_len+1 ids); the final
    partial batch is kept so every target token of the corpus is covered
    exactly once.  With no feature store the visual rows are zero.
    """
    if batch_size < 1 or seq_len < 1:
        raise ValueError("batch_size and seq_len must be >= 1")
    if store is not None:
        for r in records:
            if r.image_id not in store.map:
                raise KeyError(f"no feature vector for image_id {r.image_id!r}")
        d_vis = store.dim
    else:
        d_vis = visual_dim if visual_dim is not None else 1

    rng = np.random.Generator(np.random.PCG64(seed))
    order = rng.permutation(len(records))
    shuffled = [records[i] for i in order]

    batches = []
    for start in range(0, len(shuffled), batch_size):
        chunk = shuffled[start : start + batch_size]
        b = len(chunk)
        token_ids = np.full((b, seq_len), table.pad_id, dtype=np.int64)
        targets = np.full((b, seq_len), table.pad_id, dtype=np.int64)
        mask = np.zeros((b, seq_len), dtype=bool)
        visual = np.zeros((b, d_vis), dtype=np.float64)
        for row, rec in enumerate(chunk):
            ids = encode_caption(rec, table, seq_len + 1)
            n_in = min(len(ids), seq_len)
            token_ids[row, :n_in] = ids[:n_in]
            n_tgt = len(ids) - 1
            targets[row, :n_tgt] = ids[1 : n_tgt + 1]
            mask[row, :n_tgt] = True
            if store is not None:
                visual[row] = store.map[rec.image_id]
        batches.append(Batch(token_ids=token_ids, targets=targets, mask=mask, visual=visual))
    return batches
