"""Model evaluation: per-model view pooling, the average per-class accuracy
metric, and a line-based score interchange format.

Scores are pre-activation class scores (one vector per model), serialized as
JSON lines so downstream fusion can consume them without re-running networks.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ..models import ClassScores, Network, forward_multiview


@dataclass
class EvalResult:
    metric: float
    per_class: dict[str, float]
    confusion: np.ndarray
    scores: list[ClassScores]
    labels: dict[str, int]

    def predictions(self) -> dict[str, int]:
        return {s.model_id: int(np.argmax(s.scores)) for s in self.scores}


def confusion_matrix(y_true: np.ndarray, y_pred: np.ndarray,
                     class_count: int) -> np.ndarray:
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape:
        raise ValueError("label arrays must have matching shapes")
    if len(y_true) and (min(y_true.min(), y_pred.min()) < 0
                        or max(y_true.max(), y_pred.max()) >= class_count):
        raise ValueError(f"label out of range [0, {class_count})")
    cm = np.zeros((class_count, class_count), dtype=np.int64)
    np.add.at(cm, (y_true, y_pred), 1)
    return cm


def average_per_class_accuracy(confusion: np.ndarray) -> float:
    """Mean over classes (with at least one sample) of per-class recall."""
    confusion = np.asarray(confusion)
    totals = confusion.sum(axis=1)
    present = totals > 0
    if not present.any():
        return 0.0
    recall = confusion.diagonal()[present] / totals[present]
    return float(recall.mean())


def evaluate_network(network: Network, x: np.ndarray, y: np.ndarray,
                     ids: Sequence[str], classes: Sequence[str],
                     to_input: Callable[[np.ndarray], np.ndarray]) -> EvalResult:
    """Score every model from its grouped sample block and tally the metric.

    ``x`` holds ``len(ids)`` equal consecutive groups (orientations or views)
    and ``y`` one label per group element, constant within a group.
    """
    k = len(classes)
    if network.spec.class_count != k:
        raise ValueError(f"network predicts {network.spec.class_count} classes, "
                         f"dataset has {k}")
    if len(ids) == 0 or len(x) % len(ids) != 0:
        raise ValueError("sample count is not a multiple of the model count")
    group = len(x) // len(ids)
    scores: list[ClassScores] = []
    labels: dict[str, int] = {}
    y_true = np.empty(len(ids), dtype=np.int64)
    y_pred = np.empty(len(ids), dtype=np.int64)
    for m, model_id in enumerate(ids):
        block = slice(m * group, (m + 1) * group)
        yb = y[block]
        if not (yb == yb[0]).all():
            raise ValueError(f"inconsistent labels within group for {model_id!r}")
        sc = forward_multiview(network, to_input(x[block]), model_id)
        scores.append(sc)
        labels[model_id] = int(yb[0])
        y_true[m] = yb[0]
        y_pred[m] = int(np.argmax(sc.scores))
    cm = confusion_matrix(y_true, y_pred, k)
    totals = cm.sum(axis=1)
    per_class = {c: (float(cm[i, i] / totals[i]) if totals[i] else float("nan"))
                 for i, c in enumerate(classes)}
    return EvalResult(metric=average_per_class_accuracy(cm), per_class=per_class,
                      confusion=cm, scores=scores, labels=labels)


def write_scores(scores: Sequence[ClassScores], labels: dict[str, int]) -> str:
    lines = []
    for s in scores:
        lines.append(json.dumps({"label": labels[s.model_id],
                                 "model_id": s.model_id,
                                 "network": s.network,
                                 "scores": [float(v) for v in s.scores]},
                                sort_keys=True))
    return "\n".join(lines) + "\n"


def read_scores(text: str) -> tuple[list[ClassScores], dict[str, int]]:
    scores: list[ClassScores] = []
    labels: dict[str, int] = {}
    for line in text.splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        scores.append(ClassScores(scores=np.asarray(rec["scores"], dtype=np.float64),
                                  model_id=rec["model_id"],
                                  network=rec["network"]))
        labels[rec["model_id"]] = int(rec["label"])
    return scores, labels
