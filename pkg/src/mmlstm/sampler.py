"""Length-constrained caption generation: deterministic beam search whose
per-step candidate set is filtered by top-k then top-p (nucleus) truncation.

Generation always produces exactly ``target_length`` content tokens: control
tokens (PAD, BOS, EOS) are masked out of every step's distribution, matching
the forced ground-truth-length sampling protocol.  Candidates are ranked by
model probability; no stochastic mode is implemented, so the ``seed`` field
is reserved.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .lexicon import EmbeddingTable
from .model import LstmParams, ModelConfig, LstmState, step_logits, zero_state


@dataclass
class SamplerConfig:
    target_length: int
    prompt: list[int] = field(default_factory=list)
    k: int = 10
    p: float = 0.3
    beam_width: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.k < 1 or self.beam_width < 1:
            raise ValueError("k and beam_width must be >= 1")
        if not 0.0 < self.p <= 1.0:
            raise ValueError("p must be in (0, 1]")
        if self.target_length < len(self.prompt):
            raise ValueError("target_length must be >= prompt length")


@dataclass
class GenerationResult:
    tokens: list[int]  # prompt + generated content tokens, no BOS/EOS
    logprob: float  # sum over generated tokens
    norm_logprob: float  # logprob / generated-token count


def filter_top_k_top_p(dist: np.ndarray, k: int, p: float):
    """Keep the k most probable tokens, then the smallest descending-prob
    prefix of those with cumulative mass >= p; renormalize.  Ties break by
    ascending token id.  Returns (token_ids, probs) sorted by descending
    kept probability."""
    dist = np.asarray(dist, dtype=np.float64)
    if abs(float(dist.sum()) - 1.0) > 1e-9 or np.any(dist < 0):
        raise ValueError("dist must be a probability vector")
    # stable sort on ascending id, then stable descending-prob ordering
    order = np.argsort(-dist, kind="stable")
    order = order[: min(k, order.size)]
    cum = np.cumsum(dist[order])
    # smallest prefix with cumulative mass >= p (fall back to the whole
    # top-k set when even its total mass is below p)
    hits = np.nonzero(cum >= p - 1e-12)[0]
    cut = int(hits[0]) + 1 if hits.size else order.size
    kept = order[:cut]
    probs = dist[kept]
    return kept, probs / probs.sum()


def _softmax(logits: np.ndarray) -> np.ndarray:
    mx = logits.max()
    ex = np.exp(logits - mx)
    return ex / ex.sum()


@dataclass
class _Beam:
    tokens: tuple[int, ...]
    logprob: float
    state: LstmState
    logits: np.ndarray
    # smallest beam width whose kept set contains this hypothesis; ranks make
    # the width-v search an exact subset of the width-(v+1) search, which is
    # what guarantees beam-width monotonicity of the returned score
    rank: int = 1


def generate(
    params: LstmParams,
    model_config: ModelConfig,
    config: SamplerConfig,
    table: EmbeddingTable,
    visual: np.ndarray | None = None,
    blind_feature: np.ndarray | None = None,
) -> GenerationResult:
    """Beam-search a continuation of the prompt to exactly
    ``config.target_length`` tokens; returns the best hypothesis by
    length-normalized log-probability.  Deterministic."""
    m_vec = None
    if model_config.mode == "multimodal":
        if visual is not None:
            m_vec = params.mod @ np.asarray(visual, dtype=np.float64)
        elif model_config.blind_mode == "ones":
            m_vec = np.ones(model_config.hidden)
        elif model_config.blind_mode == "zero":
            m_vec = np.zeros(model_config.hidden)
        else:
            if blind_feature is None:
                raise ValueError("blind_mode='mean-feature' needs a blind_feature vector")
            m_vec = params.mod @ np.asarray(blind_feature, dtype=np.float64)

    banned = np.array([table.pad_id, table.bos_id, table.eos_id])

    state = zero_state(1, model_config.hidden)
    state = LstmState(z=state.z[0], c=state.c[0])
    logits = None
    for tok in [table.bos_id, *config.prompt]:
        state, logits = step_logits(params, model_config, state, tok, m_vec)

    prompt = tuple(config.prompt)
    n_generate = config.target_length - len(prompt)
    if n_generate == 0:
        return GenerationResult(tokens=list(prompt), logprob=0.0, norm_logprob=0.0)

    beams = [_Beam(tokens=prompt, logprob=0.0, state=state, logits=logits)]
    for _ in range(n_generate):
        pool = []
        for beam in beams:
            dist = _softmax(beam.logits)
            dist[banned] = 0.0
            dist = dist / dist.sum()
            kept, _ = filter_top_k_top_p(dist, config.k, config.p)
            for tok in kept:
                pool.append((beam.logprob + float(np.log(dist[tok])), beam, int(tok)))
        # highest cumulative log-probability first; ties by token sequence
        pool.sort(key=lambda item: (-item[0], item[1].tokens + (item[2],)))
        # nested selection: the width-v pick may only descend from beams of
        # rank <= v, so narrower searches are exact sub-searches of wider ones
        picked = []
        taken = [False] * len(pool)
        for width in range(1, config.beam_width + 1):
            for idx, (logprob, parent, tok) in enumerate(pool):
                if not taken[idx] and parent.rank <= width:
                    taken[idx] = True
                    picked.append((logprob, parent, tok, width))
                    break
        beams = []
        for logprob, parent, tok, rank in picked:
            new_state, new_logits = step_logits(params, model_config, parent.state, tok, m_vec)
            beams.append(
                _Beam(tokens=parent.tokens + (tok,), logprob=logprob,
                      state=new_state, logits=new_logits, rank=rank)
            )

    best = min(beams, key=lambda b: (-b.logprob / n_generate, b.tokens))
    return GenerationResult(
        tokens=list(best.tokens),
        logprob=best.logprob,
        norm_logprob=best.logprob / n_generate,
    )
