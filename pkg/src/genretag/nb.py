"""Binary-per-genre and 20-class multinomial Naive Bayes classifiers.

All probability math is carried out in log space with log-sum-exp
normalization; raw products of per-token conditionals underflow on
plots approaching 200 tokens. Conditionals use add-alpha smoothing
over the shared training vocabulary, so tokens unseen at prediction
time can simply be skipped: under a shared vocabulary the unseen-token
factor is identical across classes and cancels in the normalization.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .genres import N_GENRES, GENRES, GenreSet
from .scores import PROBABILITY, ScoreVector

BINARY_SET = "binary_set"
MULTINOMIAL = "multinomial"

FORMAT_VERSION = 1

BowCounts = dict[str, int]


@dataclass(frozen=True)
class NbClass:
    """One smoothed multinomial over the shared vocabulary."""

    log_prior: float
    log_cond: dict[str, float]
    log_cond_default: float  # smoothed log-prob of an in-vocab token unseen in this class


@dataclass(frozen=True)
class NbModel:
    kind: str  # binary_set | multinomial
    alpha: float
    vocab: frozenset[str]
    # multinomial: 20 classes in genre order.
    # binary_set: 40 classes, [genre-positive, genre-negative] per genre.
    classes: tuple[NbClass, ...]

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)


def _fit_class(
    doc_count: int,
    total_docs: int,
    token_counts: BowCounts,
    vocab_size: int,
    alpha: float,
) -> NbClass:
    log_prior = math.log(doc_count / total_docs) if doc_count else -math.inf
    class_len = sum(token_counts.values())
    denom = math.log(class_len + alpha * vocab_size)
    log_cond = {
        tok: math.log(cnt + alpha) - denom for tok, cnt in token_counts.items()
    }
    return NbClass(log_prior, log_cond, math.log(alpha) - denom)


def _shared_vocab(train: Sequence[tuple[BowCounts, GenreSet]]) -> frozenset[str]:
    vocab: set[str] = set()
    for bow, _ in train:
        vocab.update(bow)
    return frozenset(vocab)


def train_binary_nb(
    train: Sequence[tuple[BowCounts, GenreSet]], alpha: float = 1.0
) -> NbModel:
    """Fit a two-class (genre vs not-genre) model for each of the 20 genres."""
    if not train:
        raise ValueError("empty training set")
    vocab = _shared_vocab(train)
    classes: list[NbClass] = []
    for g in range(N_GENRES):
        pos_docs = neg_docs = 0
        pos_counts: BowCounts = {}
        neg_counts: BowCounts = {}
        for bow, genres in train:
            if g in genres:
                pos_docs += 1
                target = pos_counts
            else:
                neg_docs += 1
                target = neg_counts
            for tok, cnt in bow.items():
                target[tok] = target.get(tok, 0) + cnt
        classes.append(_fit_class(pos_docs, len(train), pos_counts, len(vocab), alpha))
        classes.append(_fit_class(neg_docs, len(train), neg_counts, len(vocab), alpha))
    return NbModel(BINARY_SET, alpha, vocab, tuple(classes))


def train_multinomial_nb(
    train: Sequence[tuple[BowCounts, GenreSet]], alpha: float = 1.0
) -> NbModel:
    """Fit one 20-class model; a movie with k genres contributes its counts
    to each of its k classes, and priors are fractions over those pairs."""
    if not train:
        raise ValueError("empty training set")
    vocab = _shared_vocab(train)
    pair_counts = [0] * N_GENRES
    token_counts: list[BowCounts] = [{} for _ in range(N_GENRES)]
    total_pairs = 0
    for bow, genres in train:
        for g in genres:
            pair_counts[g] += 1
            total_pairs += 1
            target = token_counts[g]
            for tok, cnt in bow.items():
                target[tok] = target.get(tok, 0) + cnt
    classes = tuple(
        _fit_class(pair_counts[g], total_pairs, token_counts[g], len(vocab), alpha)
        for g in range(N_GENRES)
    )
    return NbModel(MULTINOMIAL, alpha, vocab, classes)


def _class_log_score(model: NbModel, cls: NbClass, bow: BowCounts) -> float:
    score = cls.log_prior
    for tok, cnt in bow.items():
        if tok in model.vocab:
            score += cnt * cls.log_cond.get(tok, cls.log_cond_default)
    return score


def log_priors(model: NbModel) -> np.ndarray:
    """Per-genre log priors (for multinomial, the expanded-pair fractions)."""
    if model.kind == MULTINOMIAL:
        return np.array([cls.log_prior for cls in model.classes])
    return np.array([model.classes[2 * g].log_prior for g in range(N_GENRES)])


def posterior(model: NbModel, bow: BowCounts) -> ScoreVector:
    """20-genre posterior of a multinomial model, normalized in log space."""
    if model.kind != MULTINOMIAL:
        raise ValueError("posterior requires a multinomial model")
    log_scores = np.array(
        [_class_log_score(model, cls, bow) for cls in model.classes]
    )
    log_norm = np.logaddexp.reduce(log_scores)
    return ScoreVector(np.exp(log_scores - log_norm), PROBABILITY)


def predict_binary(model: NbModel, bow: BowCounts) -> GenreSet:
    """Genres whose two-class posterior exceeds 0.5 (strictly)."""
    if model.kind != BINARY_SET:
        raise ValueError("predict_binary requires a binary_set model")
    indices = []
    for g in range(N_GENRES):
        pos = _class_log_score(model, model.classes[2 * g], bow)
        neg = _class_log_score(model, model.classes[2 * g + 1], bow)
        # P(g|d) > 0.5 is equivalent to the positive log score strictly winning
        if pos > neg:
            indices.append(g)
    return GenreSet.from_indices(indices)


def predict_multinomial(model: NbModel, bow: BowCounts) -> GenreSet:
    """Genres where the posterior strictly exceeds the prior belief."""
    probs = posterior(model, bow).values
    priors = np.exp(log_priors(model))
    return GenreSet.from_indices(np.nonzero(probs > priors)[0].tolist())


def save_model(model: NbModel, path: str | Path) -> None:
    if model.kind == MULTINOMIAL:
        class_keys = list(GENRES)
    else:
        class_keys = [f"{name}:{tag}" for name in GENRES for tag in ("pos", "neg")]
    payload = {
        "format_version": FORMAT_VERSION,
        "kind": model.kind,
        "alpha": model.alpha,
        "vocab_size": model.vocab_size,
        "classes": {
            # a class absent from training has prior 0; stored as null
            key: {
                "log_prior": None if cls.log_prior == -math.inf else cls.log_prior,
                "log_cond": cls.log_cond,
                "log_cond_default": cls.log_cond_default,
            }
            for key, cls in zip(class_keys, model.classes)
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, ensure_ascii=False)


def load_model(path: str | Path) -> NbModel:
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    if obj.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported model format: {obj.get('format_version')}")
    kind = obj["kind"]
    if kind == MULTINOMIAL:
        class_keys = list(GENRES)
    elif kind == BINARY_SET:
        class_keys = [f"{name}:{tag}" for name in GENRES for tag in ("pos", "neg")]
    else:
        raise ValueError(f"unknown naive bayes kind: {kind!r}")
    classes = []
    vocab: set[str] = set()
    for key in class_keys:
        entry = obj["classes"][key]
        prior = entry["log_prior"]
        classes.append(
            NbClass(
                -math.inf if prior is None else prior,
                entry["log_cond"],
                entry["log_cond_default"],
            )
        )
        vocab.update(entry["log_cond"])
    model = NbModel(kind, obj["alpha"], frozenset(vocab), tuple(classes))
    if model.vocab_size != obj["vocab_size"]:
        raise ValueError("vocab_size does not match the stored conditionals")
    return model
