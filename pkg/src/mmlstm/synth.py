"""Desk-scale synthetic bilingual caption corpus with controllable visual
grounding.

Every image carries a latent scene (one noun attribute, one adjective
attribute) one-hot-encoded into its feature vector.  With probability
``gamma`` a caption verbalizes its image's scene; otherwise it describes a
random scene, so gamma=1 makes content words fully recoverable from the
features and gamma=0 makes the features useless.  Each image gets captions
in both languages for the same latent scene.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import CaptionRecord, FeatureStore, save_captions, save_features
from .lexicon import EmbeddingTable, SPECIAL_PIECES, _build_table, save_embeddings

NOUNS_EN = (
    "dog", "cat", "bear", "pizza", "girl", "car", "bird", "boat",
    "house", "tree", "horse", "fish", "train", "apple", "clock", "flower",
)
NOUNS_ES = (
    "perro", "gato", "oso", "pizza", "chica", "coche", "pajaro", "barco",
    "casa", "arbol", "caballo", "pez", "tren", "manzana", "reloj", "flor",
)
ADJS_EN = (
    "big", "small", "red", "brown", "white", "black", "happy", "old",
    "young", "green", "blue", "tall", "short", "dark", "bright", "quiet",
)
ADJS_ES = (
    "grande", "pequeno", "rojo", "marron", "blanco", "negro", "feliz", "viejo",
    "joven", "verde", "azul", "alto", "bajo", "oscuro", "brillante", "tranquilo",
)


@dataclass
class SynthSpec:
    n_images: int = 500
    captions_per_lang: int = 2
    n_nouns: int = 8
    n_adjs: int = 8
    feature_dim: int | None = None  # defaults to n_nouns + n_adjs
    emb_dim: int = 32
    gamma: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if self.n_nouns > len(NOUNS_EN) or self.n_adjs > len(ADJS_EN):
            raise ValueError(
                f"at most {len(NOUNS_EN)} nouns and {len(ADJS_EN)} adjectives are available"
            )
        if self.n_images < 1 or self.captions_per_lang < 1:
            raise ValueError("need at least one image and one caption per language")
        base = self.n_nouns + self.n_adjs
        if self.feature_dim is None:
            self.feature_dim = base
        elif self.feature_dim < base:
            raise ValueError(f"feature_dim must be >= {base}")


@dataclass
class SynthCorpus:
    records: list[CaptionRecord]
    store: FeatureStore
    table: EmbeddingTable
    scenes: dict[str, tuple[int, int]] = field(default_factory=dict)


def _caption(lang: str, noun_idx: int, adj_idx: int) -> str:
    if lang == "en":
        return f"a {ADJS_EN[adj_idx]} {NOUNS_EN[noun_idx]}"
    return f"un {NOUNS_ES[noun_idx]} {ADJS_ES[adj_idx]}"


def vocabulary(spec: SynthSpec) -> list[str]:
    words: list[str] = ["a", "un"]
    for w in (
        NOUNS_EN[: spec.n_nouns] + NOUNS_ES[: spec.n_nouns]
        + ADJS_EN[: spec.n_adjs] + ADJS_ES[: spec.n_adjs]
    ):
        if w not in words:
            words.append(w)
    return words


def make_corpus(spec: SynthSpec, seed: int) -> SynthCorpus:
    rng = np.random.Generator(np.random.PCG64(seed))

    records: list[CaptionRecord] = []
    features: dict[str, np.ndarray] = {}
    scenes: dict[str, tuple[int, int]] = {}
    width = len(str(spec.n_images - 1))
    for img in range(spec.n_images):
        image_id = f"img{img:0{width}d}"
        noun = int(rng.integers(spec.n_nouns))
        adj = int(rng.integers(spec.n_adjs))
        scenes[image_id] = (noun, adj)
        vec = np.zeros(spec.feature_dim, dtype=np.float64)
        vec[noun] = 1.0
        vec[spec.n_nouns + adj] = 1.0
        features[image_id] = vec
        for lang in ("en", "es"):
            for _ in range(spec.captions_per_lang):
                if rng.random() < spec.gamma:
                    n_i, a_i = noun, adj
                else:
                    n_i = int(rng.integers(spec.n_nouns))
                    a_i = int(rng.integers(spec.n_adjs))
                records.append(
                    CaptionRecord(image_id=image_id, lang=lang, text=_caption(lang, n_i, a_i))
                )

    words = vocabulary(spec)
    vectors = rng.uniform(-0.1, 0.1, size=(len(words), spec.emb_dim))
    pieces = words + list(SPECIAL_PIECES)
    vectors = np.vstack([vectors, np.zeros((len(SPECIAL_PIECES), spec.emb_dim))])
    table = _build_table(pieces, vectors)

    return SynthCorpus(
        records=records,
        store=FeatureStore(dim=spec.feature_dim, map=features),
        table=table,
        scenes=scenes,
    )


def write_corpus(corpus: SynthCorpus, captions_path: str, features_path: str, emb_path: str):
    save_captions(corpus.records, captions_path)
    save_features(corpus.store, features_path)
    save_embeddings(corpus.table, emb_path)
