"""Visually gated multilingual LSTM language-modeling toolkit."""

__version__ = "0.1.0"

from .lexicon import EmbeddingTable, load_embeddings, save_embeddings, tokenize, word_vector
from .data import (
    CaptionRecord,
    FeatureStore,
    Batch,
    load_captions,
    load_features,
    make_batches,
    split_corpus,
)
from .model import (
    LstmParams,
    LstmState,
    ModelConfig,
    backward_sequence,
    forward_sequence,
    init_params,
    load_checkpoint,
    lstm_step,
    save_checkpoint,
    visual_modulate,
)
from .trainer import (
    TrainConfig,
    TrainLog,
    clip_global_norm,
    evaluate_perplexity,
    lr_schedule_step,
    run_trials,
    train,
)
from .simeval import (
    SimilarityDataset,
    bh_adjust,
    cosine_similarity,
    evaluate_dataset,
    p_value,
    partial_r,
    pearson_r,
)
from .sampler import SamplerConfig, filter_top_k_top_p, generate
from .synth import SynthSpec, make_corpus
