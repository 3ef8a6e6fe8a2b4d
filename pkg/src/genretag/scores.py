"""Per-movie score vectors over the 20 genres.

Every classifier in the toolkit emits one of three score kinds:

* ``probability`` - a categorical distribution (nonnegative, sums to 1),
* ``sigmoid``     - 20 independent probabilities, each in (0, 1),
* ``rank``        - unbounded real-valued rank scores.

Decision strategies check the kind so that, e.g., a 0.5 cutoff is never
applied to rank values.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .genres import N_GENRES

PROBABILITY = "probability"
SIGMOID = "sigmoid"
RANK = "rank"

_KINDS = (PROBABILITY, SIGMOID, RANK)

PROB_SUM_TOL = 1e-9


@dataclass(frozen=True)
class ScoreVector:
    values: np.ndarray = field(repr=False)
    kind: str = RANK

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        if values.shape != (N_GENRES,):
            raise ValueError(f"expected {N_GENRES} scores, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("scores must be finite")
        if self.kind not in _KINDS:
            raise ValueError(f"unknown score kind: {self.kind!r}")
        if self.kind == PROBABILITY:
            if np.any(values < 0) or abs(values.sum() - 1.0) > PROB_SUM_TOL:
                raise ValueError("probability scores must be nonnegative and sum to 1")
        elif self.kind == SIGMOID:
            if np.any(values <= 0) or np.any(values >= 1):
                raise ValueError("sigmoid scores must lie in (0, 1)")
