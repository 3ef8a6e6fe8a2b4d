"""Corpus ingestion, filtering, splitting, and statistics.

The corpus file format is one JSON object per line with fields ``id``,
``title``, ``plot`` and ``genres`` (array of lowercase genre names).
Unknown fields are ignored; genre names outside the 20-genre universe
are dropped per record, and a record with no known genre left is
dropped entirely.
"""

from __future__ import annotations

import hashlib
import json
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

from .genres import GenreSet, is_genre

TOKEN_HIST_EDGES = (50, 100, 150, 200)
TOKEN_HIST_LABELS = ("0-50", "50-100", "100-150", "150-200", ">200")


class CorpusError(ValueError):
    """Malformed or inconsistent corpus input."""


@dataclass(frozen=True)
class MovieRecord:
    id: str
    title: str
    plot: str
    genres: GenreSet

    def __post_init__(self) -> None:
        if not self.genres:
            raise CorpusError(f"record {self.id!r} has an empty genre set")
        if not self.plot:
            raise CorpusError(f"record {self.id!r} has an empty plot")


@dataclass(frozen=True)
class SplitSpec:
    """Train/validation/test fractions plus the seed that fixes the split."""

    fractions: tuple[float, float, float]
    seed: int = 0

    def __post_init__(self) -> None:
        if len(self.fractions) != 3 or any(f < 0 for f in self.fractions):
            raise ValueError("fractions must be three nonnegative reals")
        if abs(sum(self.fractions) - 1.0) > 1e-9:
            raise ValueError(f"fractions must sum to 1, got {sum(self.fractions)}")


def load_corpus(path: str | Path) -> list[MovieRecord]:
    """Load and validate a jsonl corpus file.

    Unknown genres are dropped from each record; records left with no
    known genre are skipped. Duplicate ids and malformed lines raise
    CorpusError with the offending line number.
    """
    records: list[MovieRecord] = []
    seen_ids: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            try:
                rec_id = obj["id"]
                title = obj["title"]
                plot = obj["plot"]
                names = obj["genres"]
            except (TypeError, KeyError) as exc:
                raise CorpusError(f"{path}:{lineno}: missing field {exc}") from exc
            if not isinstance(rec_id, str) or not isinstance(names, list):
                raise CorpusError(f"{path}:{lineno}: bad field types")
            if rec_id in seen_ids:
                raise CorpusError(f"{path}:{lineno}: duplicate id {rec_id!r}")
            seen_ids.add(rec_id)
            known = [n for n in names if is_genre(n)]
            if not known:
                continue
            try:
                records.append(
                    MovieRecord(rec_id, title, plot, GenreSet.from_names(known))
                )
            except CorpusError as exc:
                raise CorpusError(f"{path}:{lineno}: {exc}") from exc
    return records


def save_corpus(records: Sequence[MovieRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(
                json.dumps(
                    {
                        "id": rec.id,
                        "title": rec.title,
                        "plot": rec.plot,
                        "genres": list(rec.genres.names()),
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )


def filter_corpus(
    records: Sequence[MovieRecord],
    max_tokens: int,
    tokenizer: Callable[[str], list[str]],
) -> list[MovieRecord]:
    """Keep records whose tokenized plot has at most ``max_tokens`` tokens."""
    if max_tokens < 1:
        raise ValueError("max_tokens must be >= 1")
    return [rec for rec in records if len(tokenizer(rec.plot)) <= max_tokens]


def _assign_key(seed: int, record_id: str) -> bytes:
    key = seed.to_bytes(8, "little", signed=True)
    return hashlib.blake2b(record_id.encode("utf-8"), key=key, digest_size=8).digest()


def split_corpus(
    records: Sequence[MovieRecord], spec: SplitSpec
) -> tuple[list[MovieRecord], list[MovieRecord], list[MovieRecord]]:
    """Partition records into (train, validation, test).

    Records are ranked by a seeded hash of their id and cut by quota:
    validation and test take floor(n * fraction) records each, train
    takes the rest (including the rounding remainder). Input order is
    preserved within each split.
    """
    n = len(records)
    # floor(n * f), with a tolerance absorbing float error on exact products
    n_val = int(n * spec.fractions[1] + 1e-9)
    n_test = int(n * spec.fractions[2] + 1e-9)
    order = sorted(
        range(n), key=lambda i: (_assign_key(spec.seed, records[i].id), records[i].id)
    )
    val_idx = set(order[:n_val])
    test_idx = set(order[n_val : n_val + n_test])
    train, val, test = [], [], []
    for i, rec in enumerate(records):
        if i in val_idx:
            val.append(rec)
        elif i in test_idx:
            test.append(rec)
        else:
            train.append(rec)
    return train, val, test


def corpus_stats(
    records: Sequence[MovieRecord], tokenizer: Callable[[str], list[str]]
) -> dict:
    """Corpus statistics report (see the stats JSON schema in the README).

    An empty corpus reports zero counts and zero means.
    """
    n = len(records)
    genre_counts = Counter()
    set_sizes = Counter()
    masks = set()
    token_bins = [0] * len(TOKEN_HIST_LABELS)
    total_genres = 0
    total_tokens = 0
    for rec in records:
        for name in rec.genres.names():
            genre_counts[name] += 1
        size = len(rec.genres)
        set_sizes[size] += 1
        total_genres += size
        masks.add(rec.genres.mask)
        n_tok = len(tokenizer(rec.plot))
        total_tokens += n_tok
        for b, edge in enumerate(TOKEN_HIST_EDGES):
            if n_tok <= edge:
                token_bins[b] += 1
                break
        else:
            token_bins[-1] += 1
    return {
        "n_records": n,
        "genre_freq": {
            name: genre_counts[name] / n for name in sorted(genre_counts)
        },
        "set_size_hist": {
            str(size): set_sizes[size] / n for size in sorted(set_sizes)
        },
        "mean_genres": total_genres / n if n else 0.0,
        "token_hist": {
            label: token_bins[b] / n if n else 0.0
            for b, label in enumerate(TOKEN_HIST_LABELS)
        },
        "mean_tokens": total_tokens / n if n else 0.0,
        "unique_genre_sets": len(masks),
    }
