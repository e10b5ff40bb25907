"""Score-level fusion: a weighted sum of per-network class scores, with the
weight vector picked by exhaustive search over a quantized simplex grid on a
held-out validation split.

Ties on validation metric go to the most uniform weight vector so single-seed
runs do not flap between equivalent optima.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np

from ..models import ClassScores
from .evaluation import average_per_class_accuracy, confusion_matrix


@dataclass
class FusionWeights:
    components: tuple[str, ...]
    weights: tuple[float, ...]

    def __post_init__(self):
        self.components = tuple(self.components)
        self.weights = tuple(float(w) for w in self.weights)
        if len(self.components) != len(self.weights) or not self.components:
            raise ValueError("need one weight per component")
        if len(set(self.components)) != len(self.components):
            raise ValueError("duplicate component names")
        if any(w < 0 for w in self.weights):
            raise ValueError("weights must be non-negative")
        if abs(sum(self.weights) - 1.0) > 1e-9:
            raise ValueError(f"weights must sum to 1, got {sum(self.weights)!r}")

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.components, self.weights))


def simplex_grid(n: int, step: float = 0.05) -> np.ndarray:
    """All length-n vectors with entries in {0, step, 2*step, ...} summing to 1.

    Includes the one-hot corners, so fusion can never do worse on the split
    it is fit on than the best single component.
    """
    if n < 1:
        raise ValueError("need at least one component")
    ticks = round(1.0 / step)
    if abs(ticks * step - 1.0) > 1e-9:
        raise ValueError(f"step {step!r} must divide 1 evenly")
    # Stars and bars: choose bar positions among ticks + n - 1 slots.
    rows = []
    for bars in combinations(range(ticks + n - 1), n - 1):
        prev = -1
        counts = []
        for b in bars:
            counts.append(b - prev - 1)
            prev = b
        counts.append(ticks + n - 2 - prev)
        rows.append(counts)
    grid = np.asarray(rows, dtype=np.float64) / ticks
    return grid


def _softmax_rows(mat: np.ndarray) -> np.ndarray:
    shifted = mat - mat.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _score_matrix(per_component: Sequence[Sequence[ClassScores]]
                  ) -> tuple[np.ndarray, list[str]]:
    """Stack scores into (components, models, classes), aligned by model id."""
    if not per_component or not per_component[0]:
        raise ValueError("need scores from at least one component")
    ids = [s.model_id for s in per_component[0]]
    order = {m: i for i, m in enumerate(ids)}
    k = len(per_component[0][0].scores)
    mat = np.empty((len(per_component), len(ids), k), dtype=np.float64)
    for c, scores in enumerate(per_component):
        seen = set()
        for s in scores:
            if s.model_id not in order:
                raise ValueError(f"component {c} scored unknown model {s.model_id!r}")
            if len(s.scores) != k:
                raise ValueError(f"class count mismatch for {s.model_id!r}")
            mat[c, order[s.model_id]] = s.scores
            seen.add(s.model_id)
        if len(seen) != len(ids):
            missing = sorted(set(ids) - seen)[:5]
            raise ValueError(f"component {c} is missing scores for {missing}")
    return mat, ids


def fuse_scores(per_component: Sequence[Sequence[ClassScores]],
                fusion: FusionWeights, normalize: bool = False) -> list[ClassScores]:
    """Weighted sum of component scores per model. With ``normalize`` each
    component's scores pass through softmax first (comparison mode); the
    default fuses raw pre-softmax scores."""
    mat, ids = _score_matrix(per_component)
    if mat.shape[0] != len(fusion.components):
        raise ValueError("component count does not match fusion weights")
    if normalize:
        mat = _softmax_rows(mat)
    w = np.asarray(fusion.weights)
    fused = np.tensordot(w, mat, axes=1)
    return [ClassScores(scores=fused[i], model_id=m, network="fusion")
            for i, m in enumerate(ids)]


def fuse_predictions(per_component: Sequence[Sequence[ClassScores]],
                     fusion: FusionWeights, normalize: bool = False
                     ) -> dict[str, int]:
    """Predicted class per model: argmax of the fused scores, ties toward the
    lowest class index."""
    return {s.model_id: int(np.argmax(s.scores))
            for s in fuse_scores(per_component, fusion, normalize=normalize)}


def fit_fusion_weights(per_component: Sequence[Sequence[ClassScores]],
                       labels: dict[str, int], components: Sequence[str],
                       step: float = 0.05, normalize: bool = False
                       ) -> tuple[FusionWeights, float]:
    """Pick simplex weights maximizing validation average per-class accuracy.

    Returns the weights and the achieved validation metric. Grid order is
    fixed; among metric ties the most uniform vector (smallest variance,
    then grid order) wins.
    """
    mat, ids = _score_matrix(per_component)
    if mat.shape[0] != len(components):
        raise ValueError("component count does not match score sets")
    if normalize:
        mat = _softmax_rows(mat)
    y_true = np.asarray([labels[m] for m in ids], dtype=np.int64)
    k = mat.shape[2]
    grid = simplex_grid(len(components), step=step)
    # (grid, models, classes) -> argmax class per candidate weight vector.
    fused = np.tensordot(grid, mat, axes=(1, 0))
    preds = np.argmax(fused, axis=2)
    best = None
    for g in range(len(grid)):
        cm = confusion_matrix(y_true, preds[g], k)
        metric = average_per_class_accuracy(cm)
        key = (-metric, float(np.var(grid[g])), g)
        if best is None or key < best[0]:
            best = (key, g, metric)
    _, g, metric = best
    return FusionWeights(components=tuple(components),
                         weights=tuple(grid[g])), metric
