"""Deterministic training loop: shuffled minibatches, SGD with momentum,
per-epoch CSV logging and a rolling binary checkpoint.

Every orientation or view is an independent training sample. The log's
train_metric column is the average per-class accuracy accumulated from the
batch predictions of that epoch (no extra forward pass). Wall-clock time
lives only in the CSV so metric artifacts stay byte-reproducible.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..models import Network
from ..nn import tensor as T
from ..nn.optim import OptimizerConfig, sgd_step, step_lr
from ..nn.weights import make_checkpoint, write_weights
from ..orientations import derive_seed


@dataclass
class TrainingConfig:
    epochs: int
    optimizer: OptimizerConfig
    batch_size: int = 32
    lr_step_epochs: int = 20
    lr_decay: float = 0.1
    seed: int = 0
    log_path: str | None = None
    checkpoint_path: str | None = None

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    train_metric: float
    wall_seconds: float


def _per_class_metric(correct: np.ndarray, total: np.ndarray) -> float:
    present = total > 0
    return float((correct[present] / total[present]).mean()) if present.any() else 0.0


def train(network: Network, x: np.ndarray, y: np.ndarray, cfg: TrainingConfig,
          to_input: Callable[[np.ndarray], np.ndarray], name: str = "net",
          after_epoch: Callable[[Network, int], None] | None = None
          ) -> list[EpochRecord]:
    """Train in place; returns the per-epoch log."""
    if len(x) != len(y) or len(x) == 0:
        raise ValueError("training needs matching, non-empty sample and label arrays")
    k = network.spec.class_count
    if y.min() < 0 or y.max() >= k:
        raise ValueError(f"label out of range [0, {k})")

    order_rng = np.random.default_rng(derive_seed(cfg.seed, "order", name))
    dropout_rng = np.random.default_rng(derive_seed(cfg.seed, "dropout", name))
    state: dict[str, np.ndarray] = {}
    records: list[EpochRecord] = []

    log = None
    if cfg.log_path:
        os.makedirs(os.path.dirname(cfg.log_path) or ".", exist_ok=True)
        log = open(cfg.log_path, "w", encoding="ascii")
        log.write("epoch,loss,train_metric,wall_seconds\n")
    try:
        for epoch in range(cfg.epochs):
            t0 = time.monotonic()
            lr = step_lr(cfg.optimizer.learning_rate, epoch,
                         cfg.lr_step_epochs, cfg.lr_decay)
            perm = order_rng.permutation(len(x))
            loss_sum = 0.0
            correct = np.zeros(k)
            total = np.zeros(k)
            for start in range(0, len(perm), cfg.batch_size):
                idx = perm[start:start + cfg.batch_size]
                xb = to_input(x[idx])
                yb = y[idx]
                scores = network.forward(xb, training=True, rng=dropout_rng)
                loss = T.softmax_loss(scores, yb)
                network.zero_grads()
                T.backward(loss)
                sgd_step(network.params, state, cfg.optimizer, learning_rate=lr)
                loss_sum += float(loss.data) * len(idx)
                preds = np.argmax(scores.data, axis=1)
                np.add.at(correct, yb, preds == yb)
                np.add.at(total, yb, 1)
            rec = EpochRecord(epoch=epoch,
                              loss=loss_sum / len(perm),
                              train_metric=_per_class_metric(correct, total),
                              wall_seconds=time.monotonic() - t0)
            records.append(rec)
            if log:
                log.write(f"{rec.epoch},{rec.loss:.6f},{rec.train_metric:.6f},"
                          f"{rec.wall_seconds:.3f}\n")
                log.flush()
            if cfg.checkpoint_path:
                blob = write_weights(make_checkpoint(network.arrays(), state))
                tmp = cfg.checkpoint_path + ".tmp"
                with open(tmp, "wb") as fh:
                    fh.write(blob)
                os.replace(tmp, cfg.checkpoint_path)
            if after_epoch is not None:
                after_epoch(network, epoch)
    finally:
        if log:
            log.close()
    return records
