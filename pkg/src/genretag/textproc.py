"""Tokenization, vocabulary construction, and integer encoding of plots."""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

UNK = "UNK"
EOS = "EOS"

WHITESPACE = "whitespace"
WORDPUNCT = "wordpunct"

# alphanumeric runs vs punctuation runs, whitespace discarded
_WORDPUNCT_RE = re.compile(r"\w+|[^\w\s]+", re.UNICODE)


@dataclass(frozen=True)
class Tokenizer:
    """Configurable plot tokenizer.

    ``whitespace`` mode splits on Unicode whitespace runs; ``wordpunct``
    additionally separates alphanumeric runs from punctuation runs.
    Stopwords are matched after casefolding when casefolding is on.
    """

    mode: str = WHITESPACE
    casefold: bool = True
    stopwords: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        if self.mode not in (WHITESPACE, WORDPUNCT):
            raise ValueError(f"unknown tokenizer mode: {self.mode!r}")
        object.__setattr__(self, "stopwords", frozenset(self.stopwords))

    def __call__(self, text: str) -> list[str]:
        return tokenize(self, text)


def tokenize(tokenizer: Tokenizer, text: str) -> list[str]:
    if tokenizer.mode == WHITESPACE:
        tokens = text.split()
    else:
        tokens = _WORDPUNCT_RE.findall(text)
    if tokenizer.casefold:
        tokens = [t.lower() for t in tokens]
    if tokenizer.stopwords:
        tokens = [t for t in tokens if t not in tokenizer.stopwords]
    return tokens


def load_stopwords(path: str | Path) -> frozenset[str]:
    """One token per line; blank lines and ``#`` comments are skipped."""
    words = set()
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            word = line.strip()
            if word and not word.startswith("#"):
                words.add(word)
    return frozenset(words)


@dataclass(frozen=True)
class Vocabulary:
    """Dense token ids, frequency-ordered, with UNK and EOS as the two
    highest ids so special ids stay stable across corpora."""

    tokens: tuple[str, ...]
    min_count: int

    def __post_init__(self) -> None:
        if len(self.tokens) < 2 or self.tokens[-2:] != (UNK, EOS):
            raise ValueError("vocabulary must end with the UNK and EOS entries")
        object.__setattr__(
            self, "_id_of", {tok: i for i, tok in enumerate(self.tokens)}
        )

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def unk_id(self) -> int:
        return len(self.tokens) - 2

    @property
    def eos_id(self) -> int:
        return len(self.tokens) - 1

    def id_of(self, token: str) -> int:
        return self._id_of.get(token, self.unk_id)

    def token_of(self, token_id: int) -> str:
        return self.tokens[token_id]

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(
                {
                    "format_version": 1,
                    "tokens": list(self.tokens),
                    "min_count": self.min_count,
                    "unk_id": self.unk_id,
                    "eos_id": self.eos_id,
                },
                fh,
                ensure_ascii=False,
            )

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
        return cls(tuple(obj["tokens"]), obj["min_count"])


def fit_vocab(
    token_lists: Iterable[list[str]], min_count: int = 5, max_size: int = 60000
) -> Vocabulary:
    """Build a vocabulary of the most frequent tokens.

    Tokens occurring at least ``min_count`` times are kept, most
    frequent first with lexicographic tie-breaks, truncated to
    ``max_size - 2`` to leave room for UNK and EOS.
    """
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    if max_size < 2:
        raise ValueError("max_size must be >= 2")
    counts = Counter()
    for tokens in token_lists:
        counts.update(tokens)
    kept = sorted(
        (
            tok
            for tok, cnt in counts.items()
            if cnt >= min_count and tok not in (UNK, EOS)
        ),
        key=lambda tok: (-counts[tok], tok),
    )
    return Vocabulary(tuple(kept[: max_size - 2]) + (UNK, EOS), min_count)


@dataclass(frozen=True)
class TokenIds:
    """Encoded plot: in-vocabulary ids with a trailing EOS."""

    ids: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.ids)

    def __iter__(self) -> Iterator[int]:
        return iter(self.ids)


def encode(vocab: Vocabulary, tokens: list[str]) -> TokenIds:
    """Map tokens to ids (unknown tokens to UNK) and append EOS."""
    return TokenIds(tuple(vocab.id_of(t) for t in tokens) + (vocab.eos_id,))


def decode(vocab: Vocabulary, ids: TokenIds) -> list[str]:
    return [vocab.token_of(i) for i in ids]


def unk_rate(vocab: Vocabulary, token_lists: Iterable[list[str]]) -> float:
    """Fraction of tokens that encode to UNK; 0.0 on an empty corpus."""
    total = unk = 0
    for tokens in token_lists:
        for tok in tokens:
            total += 1
            if vocab.id_of(tok) == vocab.unk_id:
                unk += 1
    return unk / total if total else 0.0


def bow_counts(tokens: list[str]) -> dict[str, int]:
    """Exact bag-of-words multiset counts."""
    return dict(Counter(tokens))
