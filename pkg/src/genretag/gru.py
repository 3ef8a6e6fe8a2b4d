"""Embedding + stacked GRU/SNGRU network trained by BPTT with Adam.

The recurrence per layer is

    z_t = sigmoid(Wz x_t + Uz h_{t-1} + bz)          update gate
    r_t = sigmoid(Wr x_t + Ur h_{t-1} + br)          reset gate
    c_t = tanh(Wc x_t + Uc (r_t * h_{t-1}) + bc)     candidate
    h_t = (1 - z_t) * h_{t-1} + z_t * c_t

with the SNGRU variant replacing tanh by layer normalization of the
candidate pre-activation (learned gain/bias), keeping the state bounded
without a squashing function. Recurrent dropout multiplies the
candidate by a per-sequence Bernoulli(keep)/keep mask held fixed across
time steps (one mask per layer).

The final hidden state of the top layer maps to 20 output values
y = W h_N + b, consumed by one of three heads: independent sigmoids,
raw rank values, or a softmax distribution with fractional 1/k targets.
Gradients are exact BPTT through the full unrolled sequence; training
uses Adam over shuffled mini-batches of equal-length sequences and
keeps the parameters of the epoch with the lowest validation loss.

All computation is float64 and deterministic for a fixed seed.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .genres import N_GENRES, GenreSet
from .scores import PROBABILITY, RANK, SIGMOID, ScoreVector
from .textproc import TokenIds

GRU = "gru"
SNGRU = "sngru"

BINARY = "binary"
RANK_HEAD = "rank"
MULTINOMIAL = "multinomial"

HEADS = (BINARY, RANK_HEAD, MULTINOMIAL)

LN_EPS = 1e-8
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

FORMAT_VERSION = 1

# Hyperparameter values considered for model selection.
SELECTION_GRID: dict[str, list] = {
    "n_layers": [1, 2, 3],
    "hidden": [128, 256],
    "dropout_keep": [0.5, 0.6, 0.7, 0.8, 0.9],
    "learning_rate": [0.0002, 0.0005, 0.001, 0.003, 0.005, 0.008, 0.01, 0.02, 0.05],
}


@dataclass(frozen=True)
class GruConfig:
    vocab_size: int
    n_layers: int = 2
    hidden: int = 128
    embed_dim: int = 128
    cell: str = GRU
    head: str = MULTINOMIAL
    dropout_keep: float = 1.0
    learning_rate: float = 0.01
    seed: int = 0
    max_epochs: int = 10
    batch_size: int = 64

    def __post_init__(self) -> None:
        if self.vocab_size < 1 or self.n_layers < 1 or self.hidden < 1:
            raise ValueError("vocab_size, n_layers and hidden must be >= 1")
        if self.embed_dim < 1 or self.batch_size < 1 or self.max_epochs < 0:
            raise ValueError("bad embed_dim/batch_size/max_epochs")
        if not 0.0 < self.dropout_keep <= 1.0:
            raise ValueError("dropout_keep must be in (0, 1]")
        if self.learning_rate < 0.0:
            raise ValueError("learning_rate must be >= 0")
        if self.cell not in (GRU, SNGRU):
            raise ValueError(f"unknown cell: {self.cell!r}")
        if self.head not in HEADS:
            raise ValueError(f"unknown head: {self.head!r}")


class GruParams:
    """All learnable tensors, as an ordered name -> array mapping.

    The block order is the declared serialization order: embedding,
    then per layer the z/r/candidate gate triples (plus layer-norm
    gain/bias for sngru), then the output transform.
    """

    def __init__(self, blocks: dict[str, np.ndarray]):
        self.blocks = blocks

    def __getitem__(self, name: str) -> np.ndarray:
        return self.blocks[name]

    def names(self) -> list[str]:
        return list(self.blocks)

    def copy(self) -> "GruParams":
        return GruParams({k: v.copy() for k, v in self.blocks.items()})

    def zeros_like(self) -> "GruParams":
        return GruParams({k: np.zeros_like(v) for k, v in self.blocks.items()})

    def add_scaled(self, other: "GruParams", scale: float) -> None:
        for k, v in self.blocks.items():
            v += scale * other.blocks[k]

    def scale(self, factor: float) -> None:
        for v in self.blocks.values():
            v *= factor


def block_names(config: GruConfig) -> list[str]:
    names = ["embedding"]
    for l in range(config.n_layers):
        names += [f"l{l}.{g}" for g in ("wz", "uz", "bz", "wr", "ur", "br", "wc", "uc", "bc")]
        if config.cell == SNGRU:
            names += [f"l{l}.ln_gain", f"l{l}.ln_bias"]
    names += ["out_w", "out_b"]
    return names


def init_params(config: GruConfig) -> GruParams:
    """Seeded initialization: uniform(-0.05, 0.05) embeddings, +-1/sqrt(fan-in)
    uniform gate and output matrices, zero biases, unit layer-norm gain."""
    rng = np.random.default_rng(config.seed)
    h, e = config.hidden, config.embed_dim
    blocks: dict[str, np.ndarray] = {}
    blocks["embedding"] = rng.uniform(-0.05, 0.05, size=(config.vocab_size, e))
    for l in range(config.n_layers):
        d_in = e if l == 0 else h
        for gate in ("z", "r", "c"):
            blocks[f"l{l}.w{gate}"] = rng.uniform(
                -1.0 / np.sqrt(d_in), 1.0 / np.sqrt(d_in), size=(h, d_in)
            )
            blocks[f"l{l}.u{gate}"] = rng.uniform(
                -1.0 / np.sqrt(h), 1.0 / np.sqrt(h), size=(h, h)
            )
            blocks[f"l{l}.b{gate}"] = np.zeros(h)
        if config.cell == SNGRU:
            blocks[f"l{l}.ln_gain"] = np.ones(h)
            blocks[f"l{l}.ln_bias"] = np.zeros(h)
    blocks["out_w"] = rng.uniform(
        -1.0 / np.sqrt(h), 1.0 / np.sqrt(h), size=(N_GENRES, h)
    )
    blocks["out_b"] = np.zeros(N_GENRES)
    ordered = {name: blocks[name] for name in block_names(config)}
    return GruParams(ordered)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass
class ForwardTrace:
    """Everything the backward pass needs: per-step states and gate
    activations per layer (arrays of shape (layers, steps, hidden)),
    the dropout masks actually applied, and the 20-value output."""

    config: GruConfig
    params: GruParams
    ids: tuple[int, ...]
    masks: np.ndarray  # (layers, hidden), ones outside train mode
    h: np.ndarray
    z: np.ndarray
    r: np.ndarray
    c: np.ndarray  # candidate after nonlinearity, before dropout
    s: np.ndarray  # r * h_prev
    xhat: np.ndarray | None  # sngru: normalized pre-activation
    inv_std: np.ndarray | None  # sngru: (layers, steps)
    y: np.ndarray

    @property
    def steps(self) -> int:
        return len(self.ids)


def forward(
    params: GruParams,
    config: GruConfig,
    ids: TokenIds | Iterable[int],
    train_mode: bool = False,
    dropout_mask_seed: int = 0,
) -> ForwardTrace:
    id_seq = tuple(ids)
    if not id_seq:
        raise ValueError("empty input sequence")
    if max(id_seq) >= config.vocab_size or min(id_seq) < 0:
        raise ValueError("token id out of range")
    L, H, T = config.n_layers, config.hidden, len(id_seq)
    sngru = config.cell == SNGRU

    masks = np.ones((L, H))
    if train_mode and config.dropout_keep < 1.0:
        keep = config.dropout_keep
        mask_rng = np.random.default_rng(dropout_mask_seed)
        masks = (mask_rng.random((L, H)) < keep).astype(np.float64) / keep

    h = np.zeros((L, T, H))
    z = np.zeros((L, T, H))
    r = np.zeros((L, T, H))
    c = np.zeros((L, T, H))
    s = np.zeros((L, T, H))
    xhat = np.zeros((L, T, H)) if sngru else None
    inv_std = np.zeros((L, T)) if sngru else None

    emb = params["embedding"]
    zero_h = np.zeros(H)
    for t in range(T):
        x = emb[id_seq[t]]
        for l in range(L):
            p = params
            h_prev = h[l, t - 1] if t > 0 else zero_h
            z_t = _sigmoid(p[f"l{l}.wz"] @ x + p[f"l{l}.uz"] @ h_prev + p[f"l{l}.bz"])
            r_t = _sigmoid(p[f"l{l}.wr"] @ x + p[f"l{l}.ur"] @ h_prev + p[f"l{l}.br"])
            s_t = r_t * h_prev
            a_c = p[f"l{l}.wc"] @ x + p[f"l{l}.uc"] @ s_t + p[f"l{l}.bc"]
            if sngru:
                mu = a_c.mean()
                istd = 1.0 / np.sqrt(a_c.var() + LN_EPS)
                norm = (a_c - mu) * istd
                c_t = p[f"l{l}.ln_gain"] * norm + p[f"l{l}.ln_bias"]
                xhat[l, t] = norm
                inv_std[l, t] = istd
            else:
                c_t = np.tanh(a_c)
            h[l, t] = (1.0 - z_t) * h_prev + z_t * (c_t * masks[l])
            z[l, t], r[l, t], c[l, t], s[l, t] = z_t, r_t, c_t, s_t
            x = h[l, t]
    y = params["out_w"] @ h[L - 1, T - 1] + params["out_b"]
    return ForwardTrace(config, params, id_seq, masks, h, z, r, c, s, xhat, inv_std, y)


def head_scores(y: np.ndarray, head: str) -> ScoreVector:
    """Map the 20 output values through the head nonlinearity."""
    y = np.asarray(y, dtype=np.float64)
    if head == BINARY:
        p = _sigmoid(y)
        # float64 saturates sigmoid to exactly 0/1 around |y| > 37; nudge
        # back inside the open interval the score kind requires
        p = np.clip(p, np.nextafter(0.0, 1.0), np.nextafter(1.0, 0.0))
        return ScoreVector(p, SIGMOID)
    if head == RANK_HEAD:
        return ScoreVector(y, RANK)
    if head == MULTINOMIAL:
        shifted = y - y.max()
        e = np.exp(shifted)
        return ScoreVector(e / e.sum(), PROBABILITY)
    raise ValueError(f"unknown head: {head!r}")


def _truth_indicator(truth: GenreSet) -> np.ndarray:
    t = np.zeros(N_GENRES)
    t[list(truth.indices())] = 1.0
    return t


def loss(scores: ScoreVector, truth: GenreSet, head: str) -> float:
    """Head loss for one example.

    binary: mean binary cross-entropy over the 20 genres; rank: the
    exponential pairwise loss summed over (true, false) genre pairs and
    normalized by the pair count; multinomial: cross-entropy against
    the fractional 1/k target distribution.
    """
    if not truth:
        raise ValueError("truth must be nonempty")
    t = _truth_indicator(truth)
    if head == BINARY:
        if scores.kind != SIGMOID:
            raise ValueError("binary head expects sigmoid scores")
        p = scores.values
        return float(-(t * np.log(p) + (1.0 - t) * np.log1p(-p)).mean())
    if head == RANK_HEAD:
        if scores.kind != RANK:
            raise ValueError("rank head expects rank scores")
        true_idx = list(truth.indices())
        false_idx = list(truth.complement().indices())
        if not false_idx:
            raise ValueError("rank loss undefined for a full-universe truth")
        rv = scores.values
        diffs = rv[true_idx][:, None] - rv[false_idx][None, :]
        return float(np.exp(-diffs).sum() / (len(true_idx) * len(false_idx)))
    if head == MULTINOMIAL:
        if scores.kind != PROBABILITY:
            raise ValueError("multinomial head expects probability scores")
        k = len(truth)
        idx = list(truth.indices())
        with np.errstate(divide="ignore"):
            logp = np.log(scores.values[idx])
        return float(-(logp / k).sum())
    raise ValueError(f"unknown head: {head!r}")


def _loss_grad_y(y: np.ndarray, truth: GenreSet, head: str) -> np.ndarray:
    """Exact gradient of the head loss with respect to the 20 outputs."""
    t = _truth_indicator(truth)
    if head == BINARY:
        return (_sigmoid(y) - t) / N_GENRES
    if head == RANK_HEAD:
        true_idx = list(truth.indices())
        false_idx = list(truth.complement().indices())
        if not true_idx or not false_idx:
            raise ValueError("rank loss needs nonempty truth and complement")
        norm = 1.0 / (len(true_idx) * len(false_idx))
        pair = np.exp(-(y[true_idx][:, None] - y[false_idx][None, :]))
        dy = np.zeros(N_GENRES)
        dy[true_idx] = -norm * pair.sum(axis=1)
        dy[false_idx] = norm * pair.sum(axis=0)
        return dy
    if head == MULTINOMIAL:
        shifted = y - y.max()
        e = np.exp(shifted)
        p = e / e.sum()
        return p - t / len(truth)
    raise ValueError(f"unknown head: {head!r}")


def backward(trace: ForwardTrace, truth: GenreSet, head: str) -> GruParams:
    """Exact BPTT gradients of the head loss for every parameter block,
    reusing the dropout masks recorded in the trace."""
    config, params = trace.config, trace.params
    L, H, T = config.n_layers, config.hidden, trace.steps
    sngru = config.cell == SNGRU
    grads = params.zeros_like()
    g = grads.blocks

    dy = _loss_grad_y(trace.y, truth, head)
    g["out_w"] += np.outer(dy, trace.h[L - 1, T - 1])
    g["out_b"] += dy

    # gradient flowing into h[l, t] from step t+1 (and the output head)
    dh_carry = np.zeros((L, H))
    dh_carry[L - 1] = params["out_w"].T @ dy
    zero_h = np.zeros(H)
    emb = params["embedding"]

    for t in range(T - 1, -1, -1):
        dx_above: np.ndarray | None = None
        for l in range(L - 1, -1, -1):
            dh = dh_carry[l].copy()
            if dx_above is not None:
                dh += dx_above
            h_prev = trace.h[l, t - 1] if t > 0 else zero_h
            z_t, r_t = trace.z[l, t], trace.r[l, t]
            c_t, s_t = trace.c[l, t], trace.s[l, t]
            mask = trace.masks[l]
            x = emb[trace.ids[t]] if l == 0 else trace.h[l - 1, t]

            dcd = dh * z_t
            dz = dh * (c_t * mask - h_prev)
            dh_prev = dh * (1.0 - z_t)
            dc = dcd * mask
            if sngru:
                norm = trace.xhat[l, t]
                g[f"l{l}.ln_gain"] += dc * norm
                g[f"l{l}.ln_bias"] += dc
                dnorm = dc * params[f"l{l}.ln_gain"]
                da_c = trace.inv_std[l, t] * (
                    dnorm - dnorm.mean() - norm * (dnorm * norm).mean()
                )
            else:
                da_c = dc * (1.0 - c_t * c_t)
            g[f"l{l}.wc"] += np.outer(da_c, x)
            g[f"l{l}.uc"] += np.outer(da_c, s_t)
            g[f"l{l}.bc"] += da_c
            ds = params[f"l{l}.uc"].T @ da_c
            dx = params[f"l{l}.wc"].T @ da_c

            dr = ds * h_prev
            dh_prev += ds * r_t
            da_r = dr * r_t * (1.0 - r_t)
            g[f"l{l}.wr"] += np.outer(da_r, x)
            g[f"l{l}.ur"] += np.outer(da_r, h_prev)
            g[f"l{l}.br"] += da_r
            dx += params[f"l{l}.wr"].T @ da_r
            dh_prev += params[f"l{l}.ur"].T @ da_r

            da_z = dz * z_t * (1.0 - z_t)
            g[f"l{l}.wz"] += np.outer(da_z, x)
            g[f"l{l}.uz"] += np.outer(da_z, h_prev)
            g[f"l{l}.bz"] += da_z
            dx += params[f"l{l}.wz"].T @ da_z
            dh_prev += params[f"l{l}.uz"].T @ da_z

            dh_carry[l] = dh_prev
            dx_above = dx
        g["embedding"][trace.ids[t]] += dx_above
    return grads


class Adam:
    """Adam with bias correction; one logical update stream per training run."""

    def __init__(self, params: GruParams):
        self.m = params.zeros_like()
        self.v = params.zeros_like()
        self.t = 0

    def step(self, params: GruParams, grads: GruParams, lr: float) -> None:
        self.t += 1
        correct1 = 1.0 - ADAM_BETA1**self.t
        correct2 = 1.0 - ADAM_BETA2**self.t
        for name, p in params.blocks.items():
            grad = grads.blocks[name]
            m = self.m.blocks[name]
            v = self.v.blocks[name]
            m *= ADAM_BETA1
            m += (1.0 - ADAM_BETA1) * grad
            v *= ADAM_BETA2
            v += (1.0 - ADAM_BETA2) * grad * grad
            p -= lr * (m / correct1) / (np.sqrt(v / correct2) + ADAM_EPS)


Example = tuple[TokenIds, GenreSet]


@dataclass(frozen=True)
class EpochLog:
    epoch: int
    train_loss: float
    val_loss: float | None
    wall_seconds: float


def _sequence_loss(
    params: GruParams, config: GruConfig, example: Example
) -> float:
    trace = forward(params, config, example[0], train_mode=False)
    return loss(head_scores(trace.y, config.head), example[1], config.head)


def mean_loss(params: GruParams, config: GruConfig, data: Sequence[Example]) -> float:
    return float(np.mean([_sequence_loss(params, config, ex) for ex in data]))


def _batches(
    lengths: list[int], perm: np.ndarray, batch_size: int
) -> list[list[int]]:
    """Equal-length mini-batches: stable-sort the shuffled order by
    sequence length, then chunk runs of the same length."""
    order = sorted(perm.tolist(), key=lambda i: lengths[i])
    batches: list[list[int]] = []
    current: list[int] = []
    for i in order:
        if current and (
            lengths[i] != lengths[current[-1]] or len(current) >= batch_size
        ):
            batches.append(current)
            current = []
        current.append(i)
    if current:
        batches.append(current)
    return batches


def train(
    config: GruConfig,
    train_data: Sequence[Example],
    val_data: Sequence[Example] = (),
) -> tuple[GruParams, list[EpochLog]]:
    """Train with Adam over shuffled equal-length mini-batches.

    Returns the parameters of the epoch with the lowest validation loss
    (training loss stands in when no validation data is given; ties
    keep the earlier epoch) plus the per-epoch log. Deterministic for a
    fixed seed.
    """
    if not train_data:
        raise ValueError("empty training set")
    rng = np.random.default_rng(config.seed)
    params = init_params(config)
    adam = Adam(params)
    lengths = [len(ids) for ids, _ in train_data]
    n = len(train_data)

    best_params = params.copy()
    best_key = np.inf
    log: list[EpochLog] = []
    for epoch in range(1, config.max_epochs + 1):
        started = time.monotonic()
        perm = rng.permutation(n)
        batches = _batches(lengths, perm, config.batch_size)
        batch_order = rng.permutation(len(batches))
        loss_sum = 0.0
        for b in batch_order:
            batch = batches[b]
            grad_sum = params.zeros_like()
            for i in batch:
                ids, truth = train_data[i]
                mask_seed = int(rng.integers(0, 2**63))
                trace = forward(params, config, ids, True, mask_seed)
                loss_sum += loss(head_scores(trace.y, config.head), truth, config.head)
                grad_sum.add_scaled(backward(trace, truth, config.head), 1.0)
            adam.step(params, grad_sum, config.learning_rate / len(batch))
        train_loss = loss_sum / n
        val_loss = mean_loss(params, config, val_data) if val_data else None
        key = val_loss if val_loss is not None else train_loss
        if key < best_key:
            best_key = key
            best_params = params.copy()
        log.append(EpochLog(epoch, train_loss, val_loss, time.monotonic() - started))
    return best_params, log


def write_train_log(log: Sequence[EpochLog], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch,train_loss,val_loss,wall_seconds\n")
        for row in log:
            val = "" if row.val_loss is None else repr(row.val_loss)
            fh.write(f"{row.epoch},{row.train_loss!r},{val},{row.wall_seconds:.3f}\n")


def enumerate_grid(grid: dict[str, list] | None = None) -> list[dict]:
    """Row-major enumeration of the hyperparameter grid."""
    grid = grid or SELECTION_GRID
    for axis, values in grid.items():
        if not values:
            raise ValueError(f"empty grid axis: {axis}")
    combos = [{}]
    for axis, values in grid.items():
        combos = [{**combo, axis: v} for combo in combos for v in values]
    return combos


def grid_search(
    base_config: GruConfig,
    train_data: Sequence[Example],
    val_data: Sequence[Example],
    grid: dict[str, list] | None = None,
) -> tuple[GruConfig, list[dict]]:
    """Train every grid combination and pick the lowest validation loss
    (first in row-major order on ties)."""
    results = []
    best_config = None
    best_loss = np.inf
    for combo in enumerate_grid(grid):
        config = replace(base_config, **combo)
        params, log = train(config, train_data, val_data)
        losses = [
            row.val_loss if row.val_loss is not None else row.train_loss
            for row in log
        ]
        val_loss = min(losses) if losses else np.inf
        results.append({**combo, "val_loss": val_loss})
        if val_loss < best_loss:
            best_loss = val_loss
            best_config = config
    return best_config, results


def save_params(
    params: GruParams,
    config: GruConfig,
    path: str | Path,
    extra: dict | None = None,
) -> None:
    """Container format: one JSON header line (shapes, config, format
    version), then the blocks as little-endian float64 in header order."""
    header = {
        "format_version": FORMAT_VERSION,
        "config": {
            "vocab_size": config.vocab_size,
            "n_layers": config.n_layers,
            "hidden": config.hidden,
            "embed_dim": config.embed_dim,
            "cell": config.cell,
            "head": config.head,
            "dropout_keep": config.dropout_keep,
            "learning_rate": config.learning_rate,
            "seed": config.seed,
            "max_epochs": config.max_epochs,
            "batch_size": config.batch_size,
        },
        "tensors": [[name, list(params[name].shape)] for name in params.names()],
    }
    if extra:
        header.update(extra)
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8") + b"\n")
        for name in params.names():
            fh.write(np.ascontiguousarray(params[name], dtype="<f8").tobytes())


def read_header(path: str | Path) -> dict:
    with open(path, "rb") as fh:
        return json.loads(fh.readline().decode("utf-8"))


def load_params(path: str | Path) -> tuple[GruParams, GruConfig, dict]:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        if header.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported model format: {header.get('format_version')}")
        config = GruConfig(**header["config"])
        blocks: dict[str, np.ndarray] = {}
        for name, shape in header["tensors"]:
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(count * 8)
            if len(raw) != count * 8:
                raise ValueError(f"truncated tensor data for {name}")
            blocks[name] = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
    params = GruParams(blocks)
    if params.names() != block_names(config):
        raise ValueError("tensor list does not match the stored config")
    return params, config, header
