"""Word-embedding table storage, plot-vector averaging, nearest words.

The on-disk format is plain text: one token followed by its vector
components per line, with an optional ``V dim`` count header on the
first line (auto-detected when the line holds exactly two integers).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np


class EmbeddingError(ValueError):
    pass


@dataclass(frozen=True)
class EmbeddingTable:
    tokens: tuple[str, ...]
    matrix: np.ndarray = field(repr=False)  # len(tokens) x dim

    def __post_init__(self) -> None:
        if self.matrix.ndim != 2 or self.matrix.shape[0] != len(self.tokens):
            raise EmbeddingError("matrix shape does not match token count")
        if len(set(self.tokens)) != len(self.tokens):
            raise EmbeddingError("duplicate tokens in table")
        object.__setattr__(
            self, "_row_of", {tok: i for i, tok in enumerate(self.tokens)}
        )

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._row_of

    def vector(self, token: str) -> np.ndarray:
        return self.matrix[self._row_of[token]]


def _looks_like_header(fields: list[str]) -> bool:
    if len(fields) != 2:
        return False
    try:
        int(fields[0]), int(fields[1])
    except ValueError:
        return False
    return True


def load_embeddings(path: str | Path) -> EmbeddingTable:
    """Parse a text embedding file; dimension is inferred from the first row."""
    tokens: list[str] = []
    rows: list[np.ndarray] = []
    seen: set[str] = set()
    dim: int | None = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            fields = line.split()
            if not fields:
                continue
            if lineno == 1 and _looks_like_header(fields):
                continue
            token, values = fields[0], fields[1:]
            if not values:
                raise EmbeddingError(f"{path}:{lineno}: row has no vector components")
            if dim is None:
                dim = len(values)
            elif len(values) != dim:
                raise EmbeddingError(
                    f"{path}:{lineno}: expected {dim} components, got {len(values)}"
                )
            if token in seen:
                raise EmbeddingError(f"{path}:{lineno}: duplicate token {token!r}")
            seen.add(token)
            try:
                rows.append(np.array([float(v) for v in values]))
            except ValueError as exc:
                raise EmbeddingError(f"{path}:{lineno}: bad float: {exc}") from exc
            tokens.append(token)
    if dim is None:
        raise EmbeddingError(f"{path}: no embedding rows found")
    return EmbeddingTable(tuple(tokens), np.array(rows))


def save_embeddings(table: EmbeddingTable, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{len(table)} {table.dim}\n")
        for token, row in zip(table.tokens, table.matrix):
            fh.write(token + " " + " ".join(repr(v) for v in row) + "\n")


def plot_vector(table: EmbeddingTable, tokens: Sequence[str]) -> np.ndarray | None:
    """Mean embedding over the tokens covered by the table.

    Tokens absent from the table are skipped; returns None when nothing
    is covered.
    """
    rows = [table.vector(t) for t in tokens if t in table]
    if not rows:
        return None
    return np.mean(rows, axis=0)


def nearest_words(
    table: EmbeddingTable, query: str, k: int
) -> list[tuple[str, float]]:
    """The k nearest tokens to the query by cosine distance, ascending.

    The query itself and zero-norm vectors are excluded; ties break
    lexicographically. Fewer than k entries are returned when the table
    is small.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if query not in table:
        raise KeyError(f"query token not in table: {query!r}")
    q = table.vector(query)
    q_norm = np.linalg.norm(q)
    if q_norm == 0.0:
        raise EmbeddingError(f"query token has a zero-norm vector: {query!r}")
    norms = np.linalg.norm(table.matrix, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        dist = 1.0 - (table.matrix @ q) / (norms * q_norm)
    candidates = [
        (float(dist[i]), tok)
        for i, tok in enumerate(table.tokens)
        if tok != query and norms[i] > 0.0
    ]
    candidates.sort()
    return [(tok, d) for d, tok in candidates[:k]]
