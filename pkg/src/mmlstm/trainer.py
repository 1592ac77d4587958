"""Optimization recipe and ablation protocols: plain SGD with global-norm
gradient clipping, patience-based learning-rate halving, per-epoch validation,
multi-seed trials, and perplexity evaluation (optionally blinded)."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .data import Batch, CaptionRecord, FeatureStore, make_batches
from .lexicon import EmbeddingTable
from .model import (
    LstmParams,
    ModelConfig,
    backward_sequence,
    forward_sequence,
    init_params,
    sequence_nll,
    trainable_names,
)

ABLATIONS = ("UM", "MM_VLVL", "MM_VLL", "CotM_VLVL", "CotM_VLL")


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    lr0: float = 1.0
    patience: int = 3
    clip_norm: float = 2.0
    epochs: int = 15
    batch_size: int = 32
    seq_len: int = 32
    dropout: float = 0.2
    seeds: tuple[int, ...] = (1, 2, 3)
    ablation: str = "MM_VLVL"

    def __post_init__(self):
        if self.lr0 <= 0 or self.clip_norm <= 0 or self.epochs < 1:
            raise ValueError("lr0, clip_norm and epochs must be positive")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.batch_size < 1 or self.seq_len < 1:
            raise ValueError("batch_size and seq_len must be >= 1")
        if self.ablation not in ABLATIONS:
            raise ValueError(f"unknown ablation {self.ablation!r}")


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    lr: float
    # wall time is informational; it never enters equality or reports
    wall_time: float = field(default=0.0, compare=False)


@dataclass
class TrainLog:
    epochs: list[EpochStats] = field(default_factory=list)
    final_test_ppl: float | None = None


def base_model_of(ablation: str) -> str:
    """UM / MM / CotM — the model actually trained for an ablation cell."""
    return ablation.split("_")[0]


def blinded_eval(ablation: str) -> bool:
    return ablation.endswith("_VLL")


def config_for_ablation(template: ModelConfig, ablation: str) -> ModelConfig:
    """Fix the mode flags an ablation implies; *_VLL only affects evaluation."""
    base = base_model_of(ablation)
    cfg = ModelConfig(
        hidden=template.hidden,
        emb_dim=template.emb_dim,
        visual_dim=template.visual_dim,
        vocab=template.vocab,
        mode="unimodal" if base == "UM" else "multimodal",
        frozen_mod=(base == "CotM"),
        frozen_emb=template.frozen_emb,
        dropout=template.dropout,
        blind_mode=template.blind_mode,
    )
    return cfg


def clip_global_norm(grads: dict[str, np.ndarray], clip_norm: float) -> dict[str, np.ndarray]:
    """Scale all tensors by clip_norm/g when the global L2 norm g exceeds
    clip_norm; otherwise leave them untouched."""
    sq = 0.0
    for g in grads.values():
        sq += float(np.sum(g * g))
    norm = math.sqrt(sq)
    if norm > clip_norm:
        scale = clip_norm / norm
        for g in grads.values():
            g *= scale
    return grads


def lr_schedule_step(history: list[float], lr: float, patience: int) -> float:
    """Halve the rate when the best validation loss has not strictly improved
    for `patience` consecutive epochs; the stall counter resets on halving.

    Pure: the halving decisions are replayed from the history alone.
    """
    if not history:
        raise ValueError("history must be nonempty")
    best = math.inf
    stall = 0
    halve_now = False
    for val in history:
        if val < best:
            best = val
            stall = 0
            halve_now = False
        else:
            stall += 1
            if stall >= patience:
                halve_now = True
                stall = 0
            else:
                halve_now = False
    return lr / 2.0 if halve_now else lr


def _derived_seed(*parts: int) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


def train(
    params: LstmParams,
    config: ModelConfig,
    train_records: list[CaptionRecord],
    valid_records: list[CaptionRecord],
    table: EmbeddingTable,
    store: FeatureStore | None,
    tc: TrainConfig,
    seed: int,
    progress: bool = False,
) -> tuple[LstmParams, TrainLog]:
    """Run the full epoch loop in place on `params`; deterministic per seed.

    Raises TrainingDiverged if the training loss goes non-finite.
    """
    store_used = store if config.mode == "multimodal" else None
    valid_batches = make_batches(
        valid_records, table, store_used, tc.batch_size, tc.seq_len,
        seed=_derived_seed(seed, 0xA11D), visual_dim=config.visual_dim,
    )
    log = TrainLog()
    lr = tc.lr0
    history: list[float] = []
    for epoch in range(1, tc.epochs + 1):
        t0 = time.perf_counter()
        batches = make_batches(
            train_records, table, store_used, tc.batch_size, tc.seq_len,
            seed=_derived_seed(seed, epoch), visual_dim=config.visual_dim,
        )
        total_nll, total_count = 0.0, 0
        for bi, batch in enumerate(batches):
            _, loss, cache = forward_sequence(
                params, config, batch,
                train_mode=True, dropout_seed=_derived_seed(seed, epoch, bi),
            )
            if not math.isfinite(loss):
                raise TrainingDiverged(
                    f"training loss became non-finite at epoch {epoch}, batch {bi} (lr={lr})"
                )
            total_nll += loss * cache["n_mask"]
            total_count += cache["n_mask"]
            grads = backward_sequence(cache, params, config)
            clip_global_norm(grads, tc.clip_norm)
            for name in trainable_names(config):
                getattr(params, name)[...] -= lr * grads[name]
        train_loss = total_nll / max(total_count, 1)
        val_nll, val_count = sequence_nll(params, config, valid_batches)
        val_loss = val_nll / max(val_count, 1)
        history.append(val_loss)
        epoch_lr = lr
        lr = lr_schedule_step(history, lr, tc.patience)
        log.epochs.append(
            EpochStats(
                epoch=epoch, train_loss=train_loss, val_loss=val_loss,
                lr=epoch_lr, wall_time=time.perf_counter() - t0,
            )
        )
        if progress:
            print(
                f"epoch {epoch:3d}  train {train_loss:.4f}  val {val_loss:.4f}  lr {epoch_lr:g}",
                flush=True,
            )
    return params, log


def evaluate_perplexity(
    params: LstmParams,
    config: ModelConfig,
    batches: list[Batch],
    blinded: bool = False,
) -> float:
    """exp of the masked mean NLL over all target tokens of the batch set."""
    if not batches:
        raise ValueError("empty batch set")
    blind_feature = None
    if blinded and config.blind_mode == "mean-feature":
        rows = np.concatenate([b.visual for b in batches], axis=0)
        blind_feature = rows.mean(axis=0)
    nll, count = sequence_nll(params, config, batches, blinded=blinded, blind_feature=blind_feature)
    if count == 0:
        raise ValueError("batch set contains no target tokens")
    return float(math.exp(nll / count))


@dataclass
class CellResult:
    ablation: str
    values: list[float]
    mean: float
    se: float
    single_seed: bool  # SE degenerate, flagged in reports


@dataclass
class TrialReport:
    cells: dict[str, CellResult]
    logs: dict[tuple[str, int], TrainLog] = field(default_factory=dict)
    models: dict[tuple[str, int], tuple[LstmParams, ModelConfig]] = field(default_factory=dict)


def mean_and_se(values: list[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=np.float64)
    mean = float(arr.mean())
    if arr.size < 2:
        return mean, 0.0
    return mean, float(arr.std(ddof=1) / math.sqrt(arr.size))


def run_trials(
    template: ModelConfig,
    splits: tuple[list[CaptionRecord], list[CaptionRecord], list[CaptionRecord]],
    table: EmbeddingTable,
    store: FeatureStore | None,
    tc: TrainConfig,
    ablations: list[str],
    progress: bool = False,
) -> TrialReport:
    """Train each distinct base model once per seed, evaluate every requested
    ablation cell on the test split, and reduce to mean +/- standard error.

    Reduction order is (ablation, seed) so reports are deterministic.
    """
    if not tc.seeds:
        raise ValueError("at least one seed is required")
    for ab in ablations:
        if ab not in ABLATIONS:
            raise ValueError(f"unknown ablation {ab!r}")
    train_recs, valid_recs, test_recs = splits
    bases = []
    for ab in ablations:
        b = base_model_of(ab)
        if b not in bases:
            bases.append(b)

    report = TrialReport(cells={})
    ppl: dict[tuple[str, int], float] = {}
    for base in bases:
        cfg = config_for_ablation(template, "UM" if base == "UM" else base + "_VLVL")
        cells = [ab for ab in ablations if base_model_of(ab) == base]
        for seed in tc.seeds:
            params = init_params(cfg, table, seed)
            if progress:
                print(f"[{base} seed={seed}] training ...", flush=True)
            params, log = train(
                params, cfg, train_recs, valid_recs, table, store, tc, seed, progress=progress
            )
            test_store = store if cfg.mode == "multimodal" else None
            test_batches = make_batches(
                test_recs, table, test_store, tc.batch_size, tc.seq_len,
                seed=_derived_seed(seed, 0x7E57), visual_dim=cfg.visual_dim,
            )
            for cell in cells:
                value = evaluate_perplexity(params, cfg, test_batches, blinded=blinded_eval(cell))
                ppl[(cell, seed)] = value
            log.final_test_ppl = ppl.get((cells[0], seed)) if cells else None
            report.logs[(base, seed)] = log
            report.models[(base, seed)] = (params, cfg)

    for ab in ablations:
        values = [ppl[(ab, seed)] for seed in tc.seeds]
        mean, se = mean_and_se(values)
        report.cells[ab] = CellResult(
            ablation=ab, values=values, mean=mean, se=se, single_seed=len(values) < 2
        )
    return report
