"""Gradient-boosted regression trees with second-order fitting.

Each round fits regression trees to the per-example gradients and
hessians of the current loss. Split search is exact greedy over sorted
feature thresholds; a leaf's weight is -G/(H + lambda) for the routed
rows, and a split is accepted only when

    gain = 0.5 * (GL^2/(HL+lambda) + GR^2/(HR+lambda) - G^2/(H+lambda))

exceeds gamma (strictly) with both children meeting the minimum child
hessian. Two ensemble flavors are provided: a 20-class softmax
classifier (gradients p - y, hessians p(1-p)) and a scalar squared-error
regressor (gradients yhat - y, unit hessians).

Everything is deterministic: thresholds are midpoints between distinct
sorted values, ties between equal-gain splits resolve to the lowest
feature index then the lowest threshold, and there is no subsampling.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .genres import N_GENRES
from .scores import PROBABILITY, ScoreVector

SOFTMAX_CLASSIFIER = "softmax_classifier"
SCALAR_REGRESSOR = "scalar_regressor"

FORMAT_VERSION = 1


@dataclass(frozen=True)
class GbtConfig:
    """Boosting hyperparameters; defaults mirror the reference booster's
    documented defaults (100 rounds, depth 6, eta 0.3, lambda 1)."""

    n_rounds: int = 100
    max_depth: int = 6
    learning_rate: float = 0.3
    lam: float = 1.0
    gamma: float = 0.0
    min_child_hessian: float = 1.0

    def __post_init__(self) -> None:
        if self.n_rounds < 0:
            raise ValueError("n_rounds must be >= 0")
        if self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValueError("learning_rate must be in (0, 1]")
        if self.lam < 0 or self.gamma < 0 or self.min_child_hessian < 0:
            raise ValueError("lam, gamma and min_child_hessian must be >= 0")


@dataclass(frozen=True)
class TreeNode:
    """Internal node (feature/threshold/children) or leaf (weight)."""

    weight: float = 0.0
    feature: int = -1
    threshold: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.feature < 0


@dataclass(frozen=True)
class RegressionTree:
    root: TreeNode

    def predict_one(self, x: np.ndarray) -> float:
        node = self.root
        while not node.is_leaf:
            node = node.left if x[node.feature] < node.threshold else node.right
        return node.weight

    def predict(self, features: np.ndarray) -> np.ndarray:
        return np.array([self.predict_one(x) for x in features])


def _best_split(
    features: np.ndarray,
    grad: np.ndarray,
    hess: np.ndarray,
    config: GbtConfig,
) -> tuple[float, int, float] | None:
    """Highest-gain (gain, feature, threshold) over all exact splits, or
    None when no split clears gamma and the child-hessian floor."""
    g_total = grad.sum()
    h_total = hess.sum()
    parent_score = g_total**2 / (h_total + config.lam)
    best: tuple[float, int, float] | None = None
    for j in range(features.shape[1]):
        col = features[:, j]
        order = np.argsort(col, kind="stable")
        col_sorted = col[order]
        g_left = np.cumsum(grad[order])[:-1]
        h_left = np.cumsum(hess[order])[:-1]
        # no split between equal feature values
        valid = col_sorted[:-1] < col_sorted[1:]
        h_right = h_total - h_left
        valid &= (h_left >= config.min_child_hessian) & (
            h_right >= config.min_child_hessian
        )
        if not valid.any():
            continue
        g_right = g_total - g_left
        with np.errstate(divide="ignore", invalid="ignore"):
            gain = 0.5 * (
                g_left**2 / (h_left + config.lam)
                + g_right**2 / (h_right + config.lam)
                - parent_score
            )
        gain[~valid | ~np.isfinite(gain)] = -np.inf
        pos = int(np.argmax(gain))  # first max = lowest threshold
        best_gain = float(gain[pos])
        if best_gain - config.gamma <= 0.0:
            continue
        if best is None or best_gain > best[0]:
            threshold = 0.5 * (float(col_sorted[pos]) + float(col_sorted[pos + 1]))
            best = (best_gain, j, threshold)
    return best


def fit_tree(
    features: np.ndarray, grad: np.ndarray, hess: np.ndarray, config: GbtConfig
) -> RegressionTree:
    """Fit one regression tree to (grad, hess); degenerate inputs yield a
    single leaf with weight -G/(H + lambda)."""
    features = np.asarray(features, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    hess = np.asarray(hess, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] != grad.shape[0]:
        raise ValueError("features must be n x d, aligned with grad/hess")
    if np.any(hess < 0):
        raise ValueError("hessians must be nonnegative")

    def build(rows: np.ndarray, depth: int) -> TreeNode:
        g, h = grad[rows], hess[rows]
        weight = -g.sum() / (h.sum() + config.lam)
        if depth >= config.max_depth or len(rows) < 2:
            return TreeNode(weight=weight)
        split = _best_split(features[rows], g, h, config)
        if split is None:
            return TreeNode(weight=weight)
        _, feature, threshold = split
        mask = features[rows, feature] < threshold
        return TreeNode(
            weight=weight,
            feature=feature,
            threshold=threshold,
            left=build(rows[mask], depth + 1),
            right=build(rows[~mask], depth + 1),
        )

    return RegressionTree(build(np.arange(features.shape[0]), 0))


@dataclass(frozen=True)
class GbtEnsemble:
    kind: str  # softmax_classifier | scalar_regressor
    config: GbtConfig
    base_score: float
    # one tree group per round; a group has 20 trees for the classifier
    # and a single tree for the regressor
    rounds: tuple[tuple[RegressionTree, ...], ...] = field(repr=False)
    n_features: int = 0


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def fit_classifier(
    features: np.ndarray,
    labels: Sequence[tuple[int, int]],
    config: GbtConfig,
    track_loss: list[float] | None = None,
) -> GbtEnsemble:
    """20-way softmax boosting over (row, genre) training pairs.

    Each pair is one training example: the features of its row with a
    one-hot target at its genre. Pass ``track_loss`` to collect the
    per-round training cross-entropy (base state first).
    """
    features = np.asarray(features, dtype=np.float64)
    if not labels:
        raise ValueError("empty training pairs")
    rows = np.array([r for r, _ in labels])
    targets = np.zeros((len(labels), N_GENRES))
    for i, (_, genre) in enumerate(labels):
        targets[i, genre] = 1.0
    x = features[rows]
    logits = np.zeros((len(labels), N_GENRES))
    groups: list[tuple[RegressionTree, ...]] = []
    for _ in range(config.n_rounds):
        probs = _softmax(logits)
        if track_loss is not None:
            track_loss.append(_xent(probs, targets))
        grad = probs - targets
        hess = probs * (1.0 - probs)
        group = []
        for c in range(N_GENRES):
            tree = fit_tree(x, grad[:, c], hess[:, c], config)
            logits[:, c] += config.learning_rate * tree.predict(x)
            group.append(tree)
        groups.append(tuple(group))
    if track_loss is not None:
        track_loss.append(_xent(_softmax(logits), targets))
    return GbtEnsemble(
        SOFTMAX_CLASSIFIER, config, 0.0, tuple(groups), features.shape[1]
    )


def _xent(probs: np.ndarray, targets: np.ndarray) -> float:
    return float(-(targets * np.log(probs)).sum(axis=1).mean())


def fit_regressor(
    features: np.ndarray,
    targets: np.ndarray,
    config: GbtConfig,
    track_loss: list[float] | None = None,
) -> GbtEnsemble:
    """Squared-error boosting; the base score is the target mean."""
    features = np.asarray(features, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if features.shape[0] < 1:
        raise ValueError("need at least one training row")
    base = float(targets.mean())
    pred = np.full(len(targets), base)
    ones = np.ones(len(targets))
    groups: list[tuple[RegressionTree, ...]] = []
    for _ in range(config.n_rounds):
        if track_loss is not None:
            track_loss.append(float(((pred - targets) ** 2).mean()))
        tree = fit_tree(features, pred - targets, ones, config)
        pred += config.learning_rate * tree.predict(features)
        groups.append((tree,))
    if track_loss is not None:
        track_loss.append(float(((pred - targets) ** 2).mean()))
    return GbtEnsemble(SCALAR_REGRESSOR, config, base, tuple(groups), features.shape[1])


def _check_input(model: GbtEnsemble, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.n_features,):
        raise ValueError(f"expected {model.n_features} features, got {x.shape}")
    return x


def predict_proba(model: GbtEnsemble, x: np.ndarray) -> ScoreVector:
    """Softmax over the per-class summed tree scores."""
    if model.kind != SOFTMAX_CLASSIFIER:
        raise ValueError("predict_proba requires a softmax_classifier ensemble")
    x = _check_input(model, x)
    logits = np.zeros(N_GENRES)
    for group in model.rounds:
        for c, tree in enumerate(group):
            logits[c] += model.config.learning_rate * tree.predict_one(x)
    return ScoreVector(_softmax(logits), PROBABILITY)


def predict_scalar(model: GbtEnsemble, x: np.ndarray) -> float:
    if model.kind != SCALAR_REGRESSOR:
        raise ValueError("predict_scalar requires a scalar_regressor ensemble")
    x = _check_input(model, x)
    score = model.base_score
    for (tree,) in model.rounds:
        score += model.config.learning_rate * tree.predict_one(x)
    return score


def _node_to_obj(node: TreeNode) -> dict:
    if node.is_leaf:
        return {"weight": node.weight}
    return {
        "weight": node.weight,
        "feature": node.feature,
        "threshold": node.threshold,
        "left": _node_to_obj(node.left),
        "right": _node_to_obj(node.right),
    }


def _node_from_obj(obj: dict) -> TreeNode:
    if "feature" not in obj:
        return TreeNode(weight=obj["weight"])
    return TreeNode(
        weight=obj["weight"],
        feature=obj["feature"],
        threshold=obj["threshold"],
        left=_node_from_obj(obj["left"]),
        right=_node_from_obj(obj["right"]),
    )


def save_model(model: GbtEnsemble, path: str | Path) -> None:
    payload = {
        "format_version": FORMAT_VERSION,
        "kind": model.kind,
        "base_score": model.base_score,
        "n_features": model.n_features,
        "config": {
            "n_rounds": model.config.n_rounds,
            "max_depth": model.config.max_depth,
            "learning_rate": model.config.learning_rate,
            "lam": model.config.lam,
            "gamma": model.config.gamma,
            "min_child_hessian": model.config.min_child_hessian,
        },
        "rounds": [
            [_node_to_obj(tree.root) for tree in group] for group in model.rounds
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def load_model(path: str | Path) -> GbtEnsemble:
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    if obj.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported model format: {obj.get('format_version')}")
    config = GbtConfig(**obj["config"])
    rounds = tuple(
        tuple(RegressionTree(_node_from_obj(t)) for t in group)
        for group in obj["rounds"]
    )
    return GbtEnsemble(obj["kind"], config, obj["base_score"], rounds, obj["n_features"])
