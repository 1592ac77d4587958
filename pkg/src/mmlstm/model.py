"""The gated recurrent language model and its exact reverse-mode gradients.

Forward pass per timestep: embed the token, run the gate recurrence, scale
the hidden state elementwise by the visual modulation vector (multimodal
mode), apply inverted dropout, project to vocabulary logits.  The modulated
hidden state is what recurs; dropout only affects the projection input.
Backward is hand-derived backpropagation through time over the whole batch.

All math is double precision; softmax uses max-subtraction.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .data import Batch
from .lexicon import EmbeddingTable

MODES = ("unimodal", "multimodal")
BLIND_MODES = ("ones", "zero", "mean-feature")

# order fixes the init draw sequence and the checkpoint tensor layout
PARAM_NAMES = (
    "W_i", "W_f", "W_g", "W_o",
    "V_i", "V_f", "V_g", "V_o",
    "b_i", "b_f", "b_g", "b_o",
    "mod", "emb", "out_w", "out_b",
)


@dataclass
class ModelConfig:
    hidden: int
    emb_dim: int
    visual_dim: int
    vocab: int
    mode: str = "multimodal"
    frozen_mod: bool = False
    frozen_emb: bool = False
    dropout: float = 0.0
    blind_mode: str = "ones"

    def __post_init__(self):
        if min(self.hidden, self.emb_dim, self.visual_dim, self.vocab) < 1:
            raise ValueError("hidden, emb_dim, visual_dim and vocab must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.blind_mode not in BLIND_MODES:
            raise ValueError(f"unknown blind_mode {self.blind_mode!r}")


@dataclass
class LstmParams:
    """All trainable tensors.  ``mod`` is the hidden-by-visual modulation
    matrix; ``emb`` the input embedding; ``out_w``/``out_b`` the untied
    output projection."""

    W_i: np.ndarray
    W_f: np.ndarray
    W_g: np.ndarray
    W_o: np.ndarray
    V_i: np.ndarray
    V_f: np.ndarray
    V_g: np.ndarray
    V_o: np.ndarray
    b_i: np.ndarray
    b_f: np.ndarray
    b_g: np.ndarray
    b_o: np.ndarray
    mod: np.ndarray
    emb: np.ndarray
    out_w: np.ndarray
    out_b: np.ndarray

    def as_dict(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def copy(self) -> "LstmParams":
        return LstmParams(**{n: getattr(self, n).copy() for n in PARAM_NAMES})


@dataclass
class LstmState:
    z: np.ndarray
    c: np.ndarray


def zero_state(batch_size: int, hidden: int) -> LstmState:
    return LstmState(
        z=np.zeros((batch_size, hidden), dtype=np.float64),
        c=np.zeros((batch_size, hidden), dtype=np.float64),
    )


def trainable_names(config: ModelConfig) -> tuple[str, ...]:
    names = list(PARAM_NAMES)
    if config.frozen_mod:
        names.remove("mod")
    if config.frozen_emb:
        names.remove("emb")
    return tuple(names)


def sigmoid(x: np.ndarray) -> np.ndarray:
    # piecewise form avoids overflow in exp for large |x|
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def init_params(config: ModelConfig, table: EmbeddingTable, seed: int) -> LstmParams:
    """Uniform [-s, s] init with s = 1/sqrt(fan-in); biases zero except the
    forget bias, which starts at one; embedding rows copied from the table."""
    if table.dim != config.emb_dim:
        raise ValueError(f"table dim {table.dim} != config emb_dim {config.emb_dim}")
    if len(table) != config.vocab:
        raise ValueError(f"table size {len(table)} != config vocab {config.vocab}")
    rng = np.random.Generator(np.random.PCG64(seed))
    n, d, dv, v = config.hidden, config.emb_dim, config.visual_dim, config.vocab

    def u(shape, fan_in):
        s = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-s, s, size=shape)

    return LstmParams(
        W_i=u((n, d), d), W_f=u((n, d), d), W_g=u((n, d), d), W_o=u((n, d), d),
        V_i=u((n, n), n), V_f=u((n, n), n), V_g=u((n, n), n), V_o=u((n, n), n),
        b_i=np.zeros(n), b_f=np.ones(n), b_g=np.zeros(n), b_o=np.zeros(n),
        mod=u((n, dv), dv),
        emb=np.array(table.vectors, dtype=np.float64, copy=True),
        out_w=u((v, n), n),
        out_b=np.zeros(v),
    )


def lstm_step(params: LstmParams, x: np.ndarray, prev: LstmState):
    """One un-modulated gate step; works on single vectors or (B, .) arrays."""
    a_i = x @ params.W_i.T + prev.z @ params.V_i.T + params.b_i
    a_f = x @ params.W_f.T + prev.z @ params.V_f.T + params.b_f
    a_g = x @ params.W_g.T + prev.z @ params.V_g.T + params.b_g
    a_o = x @ params.W_o.T + prev.z @ params.V_o.T + params.b_o
    i, f, o = sigmoid(a_i), sigmoid(a_f), sigmoid(a_o)
    g = np.tanh(a_g)
    c = f * prev.c + i * g
    z = o * np.tanh(c)
    return LstmState(z=z, c=c), (i, f, g, o)


def visual_modulate(z: np.ndarray, mod: np.ndarray, c_vis: np.ndarray) -> np.ndarray:
    """Scale the hidden state elementwise by mod @ c_vis (no nonlinearity)."""
    return z * (c_vis @ mod.T)


def modulation_vector(
    params: LstmParams,
    config: ModelConfig,
    visual: np.ndarray,
    blinded: bool = False,
    blind_feature: np.ndarray | None = None,
) -> np.ndarray | None:
    """Per-row modulation vector, or the blinded substitute; None in
    unimodal mode."""
    if config.mode != "multimodal":
        return None
    if not blinded:
        return visual @ params.mod.T
    if config.blind_mode == "ones":
        return np.ones((visual.shape[0], config.hidden), dtype=np.float64)
    if config.blind_mode == "zero":
        return np.zeros((visual.shape[0], config.hidden), dtype=np.float64)
    if blind_feature is None:
        raise ValueError("blind_mode='mean-feature' requires a blind_feature vector")
    row = blind_feature @ params.mod.T
    return np.broadcast_to(row, (visual.shape[0], config.hidden)).copy()


def forward_sequence(
    params: LstmParams,
    config: ModelConfig,
    batch: Batch,
    train_mode: bool = False,
    dropout_seed: int = 0,
    blinded: bool = False,
    blind_feature: np.ndarray | None = None,
):
    """Run the full sequence; returns (logits, masked mean NLL, cache).

    The cache retains every activation needed by :func:`backward_sequence`.
    """
    bsz, seq = batch.token_ids.shape
    n = config.hidden
    if batch.token_ids.max(initial=0) >= config.vocab:
        raise ValueError("token id out of vocabulary range")
    if config.mode == "multimodal" and not blinded and batch.visual.shape[1] != config.visual_dim:
        raise ValueError(
            f"visual dim {batch.visual.shape[1]} != config visual_dim {config.visual_dim}"
        )

    x_all = params.emb[batch.token_ids]  # (B, T, D)
    m = modulation_vector(params, config, batch.visual, blinded, blind_feature)
    if blinded:
        m_source = config.blind_mode
    elif config.mode == "multimodal":
        m_source = "visual"
    else:
        m_source = None

    drop_rate = config.dropout if train_mode else 0.0
    drop_rng = (
        np.random.Generator(np.random.PCG64(dropout_seed)) if drop_rate > 0.0 else None
    )

    gates_i = np.empty((bsz, seq, n))
    gates_f = np.empty((bsz, seq, n))
    gates_g = np.empty((bsz, seq, n))
    gates_o = np.empty((bsz, seq, n))
    z_prev_all = np.empty((bsz, seq, n))
    c_prev_all = np.empty((bsz, seq, n))
    tanh_c = np.empty((bsz, seq, n))
    z_hat = np.empty((bsz, seq, n))
    z_out = np.empty((bsz, seq, n))
    drop_mask = np.empty((bsz, seq, n)) if drop_rate > 0.0 else None

    state = zero_state(bsz, n)
    for t in range(seq):
        z_prev_all[:, t] = state.z
        c_prev_all[:, t] = state.c
        nxt, (i, f, g, o) = lstm_step(params, x_all[:, t], state)
        gates_i[:, t], gates_f[:, t], gates_g[:, t], gates_o[:, t] = i, f, g, o
        tc = np.tanh(nxt.c)
        tanh_c[:, t] = tc
        z_hat[:, t] = nxt.z
        z = nxt.z * m if m is not None else nxt.z
        z_out[:, t] = z
        state = LstmState(z=z, c=nxt.c)

    if drop_rate > 0.0:
        # inverted dropout on the projection input only; timestep draw order fixed
        for t in range(seq):
            keep = drop_rng.random((bsz, n)) >= drop_rate
            drop_mask[:, t] = keep / (1.0 - drop_rate)
        z_drop = z_out * drop_mask
    else:
        z_drop = z_out

    logits = z_drop @ params.out_w.T + params.out_b  # (B, T, |V|)

    n_mask = int(batch.mask.sum())
    if n_mask > 0:
        mx = logits.max(axis=2, keepdims=True)
        lse = mx[..., 0] + np.log(np.exp(logits - mx).sum(axis=2))
        picked = np.take_along_axis(logits, batch.targets[..., None], axis=2)[..., 0]
        loss = float(((lse - picked) * batch.mask).sum() / n_mask)
    else:
        loss = 0.0

    cache = {
        "batch": batch,
        "x_all": x_all,
        "m": m,
        "m_source": m_source,
        "blind_feature": blind_feature,
        "gates_i": gates_i, "gates_f": gates_f, "gates_g": gates_g, "gates_o": gates_o,
        "z_prev_all": z_prev_all, "c_prev_all": c_prev_all,
        "tanh_c": tanh_c, "z_hat": z_hat,
        "drop_mask": drop_mask, "z_drop": z_drop,
        "logits": logits, "n_mask": n_mask,
        "shape": (bsz, seq, n),
    }
    return logits, loss, cache


def backward_sequence(
    cache: dict, params: LstmParams, config: ModelConfig
) -> dict[str, np.ndarray]:
    """Analytic gradients of the masked mean NLL for every parameter tensor.

    Frozen tensors come back as zeros.  The returned dict is keyed like
    :data:`PARAM_NAMES`.
    """
    grads = {name: np.zeros_like(getattr(params, name)) for name in PARAM_NAMES}
    bsz, seq, n = cache["shape"]
    n_mask = cache["n_mask"]
    if n_mask == 0:
        return grads

    batch: Batch = cache["batch"]
    logits = cache["logits"]
    mx = logits.max(axis=2, keepdims=True)
    ex = np.exp(logits - mx)
    probs = ex / ex.sum(axis=2, keepdims=True)

    d_logits = probs
    rows = np.arange(bsz)[:, None]
    cols = np.arange(seq)[None, :]
    d_logits[rows, cols, batch.targets] -= 1.0
    d_logits *= (batch.mask / n_mask)[..., None]

    z_drop = cache["z_drop"]
    grads["out_w"] += np.einsum("btv,btn->vn", d_logits, z_drop)
    grads["out_b"] += d_logits.sum(axis=(0, 1))
    d_zdrop = d_logits @ params.out_w  # (B, T, n)
    if cache["drop_mask"] is not None:
        d_zseq = d_zdrop * cache["drop_mask"]
    else:
        d_zseq = d_zdrop

    m = cache["m"]
    x_all = cache["x_all"]
    gi, gf, gg, go = cache["gates_i"], cache["gates_f"], cache["gates_g"], cache["gates_o"]
    tanh_c, z_hat = cache["tanh_c"], cache["z_hat"]
    z_prev_all, c_prev_all = cache["z_prev_all"], cache["c_prev_all"]

    d_emb = grads["emb"]
    d_m_total = np.zeros((bsz, n)) if m is not None else None
    dz_carry = np.zeros((bsz, n))
    dc_carry = np.zeros((bsz, n))
    token_ids = batch.token_ids

    for t in range(seq - 1, -1, -1):
        dz = d_zseq[:, t] + dz_carry
        if m is not None:
            d_m_total += dz * z_hat[:, t]
            d_zhat = dz * m
        else:
            d_zhat = dz
        i, f, g, o = gi[:, t], gf[:, t], gg[:, t], go[:, t]
        tc = tanh_c[:, t]
        da_o = d_zhat * tc * o * (1.0 - o)
        dc = d_zhat * o * (1.0 - tc * tc) + dc_carry
        da_f = dc * c_prev_all[:, t] * f * (1.0 - f)
        da_i = dc * g * i * (1.0 - i)
        da_g = dc * i * (1.0 - g * g)
        dc_carry = dc * f

        x_t = x_all[:, t]
        z_prev = z_prev_all[:, t]
        grads["W_i"] += da_i.T @ x_t
        grads["W_f"] += da_f.T @ x_t
        grads["W_g"] += da_g.T @ x_t
        grads["W_o"] += da_o.T @ x_t
        grads["V_i"] += da_i.T @ z_prev
        grads["V_f"] += da_f.T @ z_prev
        grads["V_g"] += da_g.T @ z_prev
        grads["V_o"] += da_o.T @ z_prev
        grads["b_i"] += da_i.sum(axis=0)
        grads["b_f"] += da_f.sum(axis=0)
        grads["b_g"] += da_g.sum(axis=0)
        grads["b_o"] += da_o.sum(axis=0)

        dz_carry = da_i @ params.V_i + da_f @ params.V_f + da_g @ params.V_g + da_o @ params.V_o
        dx = da_i @ params.W_i + da_f @ params.W_f + da_g @ params.W_g + da_o @ params.W_o
        np.add.at(d_emb, token_ids[:, t], dx)

    if m is not None:
        if cache["m_source"] == "visual":
            grads["mod"] += d_m_total.T @ batch.visual
        elif cache["m_source"] == "mean-feature":
            grads["mod"] += np.outer(d_m_total.sum(axis=0), cache["blind_feature"])
        # "ones"/"zero" substitutes do not depend on mod

    if config.frozen_mod:
        grads["mod"] = np.zeros_like(params.mod)
    if config.frozen_emb:
        grads["emb"] = np.zeros_like(params.emb)
    return grads


def sequence_nll(
    params: LstmParams,
    config: ModelConfig,
    batches: list[Batch],
    blinded: bool = False,
    blind_feature: np.ndarray | None = None,
) -> tuple[float, int]:
    """Total masked NLL and target-token count over a batch list (no dropout)."""
    total, count = 0.0, 0
    for batch in batches:
        _, loss, cache = forward_sequence(
            params, config, batch, train_mode=False, blinded=blinded, blind_feature=blind_feature
        )
        total += loss * cache["n_mask"]
        count += cache["n_mask"]
    return total, count


def step_logits(
    params: LstmParams,
    config: ModelConfig,
    state: LstmState,
    token_id: int,
    m_vec: np.ndarray | None,
):
    """Single-token incremental step for the sampler: returns the carried
    state and this position's vocabulary logits."""
    x = params.emb[token_id]
    nxt, _ = lstm_step(params, x, state)
    z = nxt.z * m_vec if m_vec is not None else nxt.z
    logits = params.out_w @ z + params.out_b
    return LstmState(z=z, c=nxt.c), logits


# ---------------------------------------------------------------------------
# Checkpoint container, format MMCK1: a magic line, one compact JSON header
# (config + seeds + training progress + tensor manifest), a NUL separator,
# then the raw little-endian float64 tensor bytes in manifest order.  The
# layout has no timestamps, so save -> load -> save is byte-stable.
# ---------------------------------------------------------------------------

CHECKPOINT_MAGIC = b"MMCK1\n"


def save_checkpoint(
    path: str,
    params: LstmParams,
    config: ModelConfig,
    seeds: dict | None = None,
    progress: dict | None = None,
) -> None:
    manifest = []
    blobs = []
    offset = 0
    for name in PARAM_NAMES:
        arr = np.ascontiguousarray(getattr(params, name), dtype="<f8")
        raw = arr.tobytes(order="C")
        manifest.append(
            {"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": len(raw)}
        )
        blobs.append(raw)
        offset += len(raw)
    header = {
        "config": asdict(config),
        "seeds": seeds or {},
        "progress": progress or {},
        "tensors": manifest,
    }
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8"))
        f.write(b"\x00")
        for raw in blobs:
            f.write(raw)


def load_checkpoint(path: str):
    """Returns (params, config, seeds, progress)."""
    with open(path, "rb") as f:
        data = f.read()
    if not data.startswith(CHECKPOINT_MAGIC):
        raise ValueError(f"{path}: not a MMCK1 checkpoint")
    body = data[len(CHECKPOINT_MAGIC):]
    sep = body.index(b"\x00")
    header = json.loads(body[:sep].decode("utf-8"))
    blob = body[sep + 1:]
    config = ModelConfig(**header["config"])
    tensors = {}
    for entry in header["tensors"]:
        raw = blob[entry["offset"] : entry["offset"] + entry["nbytes"]]
        tensors[entry["name"]] = np.frombuffer(raw, dtype="<f8").reshape(entry["shape"]).copy()
    params = LstmParams(**{name: tensors[name] for name in PARAM_NAMES})
    return params, config, header["seeds"], header["progress"]
