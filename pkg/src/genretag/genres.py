"""The fixed 20-genre universe and bit-mask genre sets.

Genres are indexed 0..19 in descending order of popularity on the
original IMDB corpus, so index order doubles as the canonical
tie-break order everywhere a deterministic genre ordering is needed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator

GENRES: tuple[str, ...] = (
    "drama",
    "comedy",
    "thriller",
    "romance",
    "action",
    "family",
    "horror",
    "crime",
    "adventure",
    "animation",
    "fantasy",
    "sci-fi",
    "mystery",
    "biography",
    "music",
    "history",
    "war",
    "western",
    "sport",
    "musical",
)

N_GENRES = len(GENRES)
FULL_MASK = (1 << N_GENRES) - 1

_INDEX_OF = {name: i for i, name in enumerate(GENRES)}


def genre_index(name: str) -> int:
    """Index of a genre name, or KeyError if outside the universe."""
    return _INDEX_OF[name]


def genre_name(index: int) -> str:
    if not 0 <= index < N_GENRES:
        raise IndexError(f"genre index out of range: {index}")
    return GENRES[index]


def is_genre(name: str) -> bool:
    return name in _INDEX_OF


@dataclass(frozen=True)
class GenreSet:
    """Immutable subset of the 20-genre universe, stored as a bit mask."""

    mask: int = 0

    def __post_init__(self) -> None:
        if not 0 <= self.mask <= FULL_MASK:
            raise ValueError(f"mask out of range: {self.mask:#x}")

    @classmethod
    def from_indices(cls, indices: Iterable[int]) -> "GenreSet":
        mask = 0
        for i in indices:
            if not 0 <= i < N_GENRES:
                raise IndexError(f"genre index out of range: {i}")
            mask |= 1 << i
        return cls(mask)

    @classmethod
    def from_names(cls, names: Iterable[str]) -> "GenreSet":
        return cls.from_indices(genre_index(n) for n in names)

    @classmethod
    def full(cls) -> "GenreSet":
        return cls(FULL_MASK)

    def indices(self) -> tuple[int, ...]:
        return tuple(i for i in range(N_GENRES) if self.mask >> i & 1)

    def names(self) -> tuple[str, ...]:
        return tuple(GENRES[i] for i in self.indices())

    def complement(self) -> "GenreSet":
        return GenreSet(self.mask ^ FULL_MASK)

    def __contains__(self, index: int) -> bool:
        return bool(self.mask >> index & 1)

    def __iter__(self) -> Iterator[int]:
        return iter(self.indices())

    def __len__(self) -> int:
        return bin(self.mask).count("1")

    def __bool__(self) -> bool:
        return self.mask != 0

    def __or__(self, other: "GenreSet") -> "GenreSet":
        return GenreSet(self.mask | other.mask)

    def __and__(self, other: "GenreSet") -> "GenreSet":
        return GenreSet(self.mask & other.mask)

    def __sub__(self, other: "GenreSet") -> "GenreSet":
        return GenreSet(self.mask & ~other.mask)
