"""Semantic-similarity evaluation against human norms.

Word pairs are scored by cosine similarity of model vectors; per dataset we
report Pearson r per model, the partial correlation of the subject model with
the baseline model as control, a two-sided p-value for the partial-r, and
Benjamini-Hochberg adjusted p-values across the evaluated dataset family.

Normalized dataset files are UTF-8 TSV with columns
``word1 word2 lang1 lang2 score``; ``#`` lines are comments, and the optional
directives ``# name <name>`` and ``# scale <min> <max>`` carry metadata.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .lexicon import EmbeddingTable, word_vector


class CosineUndefinedError(ValueError):
    pass


class DegenerateInputError(ValueError):
    pass


@dataclass
class SimilarityPair:
    word1: str
    word2: str
    lang1: str
    lang2: str
    score: float


@dataclass
class SimilarityDataset:
    name: str
    pairs: list[SimilarityPair]
    scale: tuple[float, float]


@dataclass
class PairScores:
    """Kept pairs plus drop bookkeeping for one dataset.

    model_cosines has one column per model, aligned with human_scores.
    """

    human_scores: np.ndarray
    model_cosines: np.ndarray  # (n_kept, n_models)
    dropped: int
    drop_reasons: dict[str, int] = field(default_factory=dict)


@dataclass
class DatasetResult:
    name: str
    n_used: int
    dropped: int
    r_models: list[float]
    partial: float | None
    p_raw: float | None
    p_adjusted: float | None = None
    skipped: bool = False
    note: str = ""


def cosine_similarity(u: np.ndarray, v: np.ndarray) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError("vectors must have equal length")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise CosineUndefinedError("undefined cosine for zero vector")
    return float(np.dot(u, v) / (nu * nv))


def pearson_r(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("inputs must be equal-length 1-D sequences")
    if x.size < 3:
        raise ValueError("need at least 3 points")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(np.dot(dx, dx))
    syy = float(np.dot(dy, dy))
    if sxx == 0.0 or syy == 0.0:
        raise DegenerateInputError("degenerate input: zero variance")
    return float(np.dot(dx, dy) / math.sqrt(sxx * syy))


def partial_r(r_xy: float, r_xz: float, r_yz: float) -> float:
    """First-order partial correlation of x and y controlling for z."""
    if abs(r_xz) >= 1.0 or abs(r_yz) >= 1.0:
        raise DegenerateInputError("control variable perfectly correlated")
    return (r_xy - r_xz * r_yz) / math.sqrt((1.0 - r_xz**2) * (1.0 - r_yz**2))


def p_value(r: float, n: int, partial: bool = False) -> float:
    """Two-sided p for a (partial) correlation via the t statistic
    t = r*sqrt(df/(1-r^2)), df = n-2 (n-3 when partial), evaluated with the
    regularized incomplete beta function."""
    if n < 4:
        raise ValueError("need n >= 4")
    if abs(r) >= 1.0:
        return 0.0
    df = n - 3 if partial else n - 2
    t = r * math.sqrt(df / (1.0 - r * r))
    # two-sided tail of Student's t: I_{df/(df+t^2)}(df/2, 1/2)
    return float(special.betainc(df / 2.0, 0.5, df / (df + t * t)))


def bh_adjust(p_values) -> list[float]:
    """Benjamini-Hochberg step-up adjusted p-values, in the input order."""
    p = np.asarray(p_values, dtype=np.float64)
    if p.size == 0:
        return []
    if np.any((p < 0.0) | (p > 1.0)):
        raise ValueError("p-values must lie in [0, 1]")
    m = p.size
    order = np.argsort(p, kind="stable")
    scaled = p[order] * m / np.arange(1, m + 1)
    adjusted_sorted = np.minimum(1.0, np.minimum.accumulate(scaled[::-1])[::-1])
    out = np.empty(m, dtype=np.float64)
    out[order] = adjusted_sorted
    return [float(v) for v in out]


def load_similarity_tsv(path: str, name: str | None = None) -> SimilarityDataset:
    """Load a normalized dataset file; rejects duplicate unordered pairs and
    out-of-scale scores."""
    pairs = []
    scale: tuple[float, float] | None = None
    ds_name = name
    with open(path, encoding="utf-8") as f:
        for no, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if parts[:1] == ["name"] and len(parts) >= 2 and ds_name is None:
                    ds_name = parts[1]
                elif parts[:1] == ["scale"] and len(parts) == 3:
                    scale = (float(parts[1]), float(parts[2]))
                continue
            cols = line.split("\t")
            if len(cols) != 5:
                raise ValueError(f"{path}:{no}: expected 5 tab-separated fields, got {len(cols)}")
            w1, w2, l1, l2, s = cols
            pairs.append(SimilarityPair(w1, w2, l1, l2, float(s)))
    if ds_name is None:
        ds_name = path.rsplit("/", 1)[-1].rsplit(".", 1)[0]
    if scale is None:
        scores = [p.score for p in pairs]
        scale = (min(scores, default=0.0), max(scores, default=1.0))
    seen = set()
    for p in pairs:
        key = frozenset(((p.word1, p.lang1), (p.word2, p.lang2)))
        if key in seen:
            raise ValueError(f"duplicate pair ({p.word1}, {p.word2}) in {path}")
        seen.add(key)
        if not scale[0] <= p.score <= scale[1]:
            raise ValueError(f"score {p.score} outside scale {scale} in {path}")
    return SimilarityDataset(name=ds_name, pairs=pairs, scale=scale)


def save_similarity_tsv(dataset: SimilarityDataset, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"# name {dataset.name}\n")
        f.write(f"# scale {dataset.scale[0]:g} {dataset.scale[1]:g}\n")
        for p in dataset.pairs:
            # repr keeps the score bit-exact through the text round trip
            f.write(f"{p.word1}\t{p.word2}\t{p.lang1}\t{p.lang2}\t{p.score!r}\n")


def score_pairs(
    dataset: SimilarityDataset,
    models: list,
    table: EmbeddingTable,
    side: str = "output",
    mode: str = "single-token",
) -> PairScores:
    """Cosine-score every pair under every model with a shared drop set, so
    all correlations use identical n."""
    kept_scores = []
    kept_cosines = []
    dropped = 0
    reasons: dict[str, int] = {}

    def drop(reason: str):
        nonlocal dropped
        dropped += 1
        reasons[reason] = reasons.get(reason, 0) + 1

    for pair in dataset.pairs:
        vecs = []
        missing = False
        for word in (pair.word1, pair.word2):
            per_model = []
            for mdl in models:
                vec = word_vector(word, table, side=side, model=mdl, mode=mode)
                if vec is None:
                    missing = True
                    break
                per_model.append(vec)
            if missing:
                break
            vecs.append(per_model)
        if missing:
            drop("not in vocabulary")
            continue
        try:
            cosines = [
                cosine_similarity(vecs[0][k], vecs[1][k]) for k in range(len(models))
            ]
        except CosineUndefinedError:
            drop("zero vector")
            continue
        kept_scores.append(pair.score)
        kept_cosines.append(cosines)

    return PairScores(
        human_scores=np.asarray(kept_scores, dtype=np.float64),
        model_cosines=np.asarray(kept_cosines, dtype=np.float64).reshape(-1, len(models)),
        dropped=dropped,
        drop_reasons=reasons,
    )


def evaluate_dataset(
    dataset: SimilarityDataset,
    models: list,
    table: EmbeddingTable,
    side: str = "output",
    mode: str = "single-token",
) -> DatasetResult:
    """One report row: model[0] is the subject, model[1] the control for the
    partial correlation.  Datasets with fewer than 4 usable pairs are skipped
    with a diagnostic note."""
    if len(models) < 2:
        raise ValueError("need at least a subject and a control model")
    scores = score_pairs(dataset, models, table, side=side, mode=mode)
    n = int(scores.human_scores.size)
    if n < 4:
        return DatasetResult(
            name=dataset.name, n_used=n, dropped=scores.dropped,
            r_models=[], partial=None, p_raw=None,
            skipped=True, note=f"only {n} usable pairs (need >= 4)",
        )
    x = scores.human_scores
    r_models = [pearson_r(x, scores.model_cosines[:, k]) for k in range(len(models))]
    r_xy, r_xz = r_models[0], r_models[1]
    r_yz = pearson_r(scores.model_cosines[:, 0], scores.model_cosines[:, 1])
    if abs(r_xy) >= 1.0:
        # subject cosines perfectly aligned with the human scores
        pr = 1.0 if r_xy > 0 else -1.0
        p = 0.0
    else:
        pr = partial_r(r_xy, r_xz, r_yz)
        p = p_value(pr, n, partial=True)
    return DatasetResult(
        name=dataset.name, n_used=n, dropped=scores.dropped,
        r_models=r_models, partial=pr, p_raw=p,
    )


def evaluate_collection(
    datasets: list[SimilarityDataset],
    models: list,
    table: EmbeddingTable,
    side: str = "output",
    mode: str = "single-token",
) -> list[DatasetResult]:
    """Evaluate a dataset family and BH-adjust the partial-r p-values across
    the non-skipped rows; rows come back ordered by dataset name."""
    results = [
        evaluate_dataset(ds, models, table, side=side, mode=mode) for ds in datasets
    ]
    results.sort(key=lambda r: r.name)
    live = [r for r in results if not r.skipped]
    adjusted = bh_adjust([r.p_raw for r in live])
    for r, adj in zip(live, adjusted):
        r.p_adjusted = adj
    return results


@dataclass
class AggregateRow:
    """Per-dataset aggregation over seeds: mean +/- SE of each correlation,
    p-value computed from the mean partial-r at the shared n."""

    name: str
    n_used: int
    dropped: int
    r_mean: list[float]
    r_se: list[float]
    partial_mean: float | None
    partial_se: float | None
    p_raw: float | None
    p_adjusted: float | None
    skipped: bool
    note: str = ""


def evaluate_experiment(
    datasets: list[SimilarityDataset],
    models_by_seed: list[list],
    table: EmbeddingTable,
    side: str = "output",
    mode: str = "single-token",
) -> list[AggregateRow]:
    """Evaluate each seed's model pair, average the per-seed correlations,
    then BH-adjust across datasets (the family = this invocation)."""
    if not models_by_seed:
        raise ValueError("need at least one seed's models")
    per_seed = [
        {r.name: r for r in (
            evaluate_dataset(ds, models, table, side=side, mode=mode) for ds in datasets
        )}
        for models in models_by_seed
    ]
    n_models = len(models_by_seed[0])
    rows: list[AggregateRow] = []
    for ds in sorted(datasets, key=lambda d: d.name):
        results = [per_seed[k][ds.name] for k in range(len(models_by_seed))]
        if any(r.skipped for r in results):
            first = results[0]
            rows.append(AggregateRow(
                name=ds.name, n_used=first.n_used, dropped=first.dropped,
                r_mean=[], r_se=[], partial_mean=None, partial_se=None,
                p_raw=None, p_adjusted=None, skipped=True, note=first.note,
            ))
            continue
        if len({r.n_used for r in results}) > 1:
            raise ValueError(
                f"{ds.name}: usable-pair count differs across seeds; drop sets must be shared"
            )
        r_mean, r_se = [], []
        for k in range(n_models):
            vals = np.asarray([r.r_models[k] for r in results])
            r_mean.append(float(vals.mean()))
            r_se.append(_se(vals))
        pvals = np.asarray([r.partial for r in results])
        partial_mean = float(pvals.mean())
        n_used = results[0].n_used
        clipped = max(min(partial_mean, 1.0), -1.0)
        rows.append(AggregateRow(
            name=ds.name, n_used=n_used, dropped=results[0].dropped,
            r_mean=r_mean, r_se=r_se,
            partial_mean=partial_mean, partial_se=_se(pvals),
            p_raw=p_value(clipped, n_used, partial=True),
            p_adjusted=None, skipped=False,
        ))
    live = [r for r in rows if not r.skipped]
    adjusted = bh_adjust([r.p_raw for r in live])
    for r, adj in zip(live, adjusted):
        r.p_adjusted = adj
    return rows


def _se(vals: np.ndarray) -> float:
    if vals.size < 2:
        return 0.0
    return float(vals.std(ddof=1) / math.sqrt(vals.size))
