"""Mini-batch training loop."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ..errors import NumericFailureError, ParameterError
from .losses import check_onehot, cross_entropy
from .model import Model
from .optim import Optimizer, optimizer_step

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 32
    seed: int = 0
    validation: Optional[tuple] = None  # (x_val, onehot_val)
    # stop once an epoch's dropout-mode training accuracy reaches this value
    stop_accuracy: Optional[float] = None

    def __post_init__(self):
        if self.epochs < 1:
            raise ParameterError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ParameterError("batch_size must be >= 1")


@dataclass
class History:
    loss: list = field(default_factory=list)
    accuracy: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    val_accuracy: list = field(default_factory=list)
    val_top3: list = field(default_factory=list)

    @property
    def epochs_run(self) -> int:
        return len(self.loss)


def _topk_hits(probs, labels, k):
    k = min(k, probs.shape[1])
    order = np.argsort(-probs, axis=1, kind="stable")[:, :k]
    return (order == labels[:, None]).any(axis=1)


def fit(model: Model, x, onehot, config: TrainConfig = TrainConfig(),
        optimizer: Optional[Optimizer] = None,
        on_epoch: Optional[Callable[[int, History], None]] = None) -> History:
    """Train ``model`` in place.

    A single generator seeded from ``config.seed`` drives both the per-epoch
    shuffle and the dropout masks, so a run is bit-reproducible.
    """
    x = np.asarray(x, dtype=np.float64)
    y = check_onehot(onehot)
    if x.shape[0] == 0:
        raise ParameterError("training set is empty")
    if x.shape[0] != y.shape[0]:
        raise ParameterError("inputs and labels differ in count")
    if y.shape[1] != model.num_classes:
        raise ParameterError(f"labels have {y.shape[1]} classes, model outputs {model.num_classes}")
    optimizer = optimizer or model.optimizer
    if optimizer is None:
        raise ParameterError("no optimizer: compile the model or pass one")
    labels = y.argmax(axis=1)
    rng = np.random.default_rng(config.seed)
    hist = History()
    n = x.shape[0]
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        total_loss = 0.0
        correct = 0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            cache = model.forward(x[idx], training=True, rng=rng)
            loss = cross_entropy(cache.output, y[idx])
            if not np.isfinite(loss):
                raise NumericFailureError(f"non-finite loss at epoch {epoch + 1}, batch starting {start}")
            grads = model.backward(cache, y[idx])
            optimizer_step(model, optimizer, grads)
            total_loss += loss * idx.size
            correct += int((cache.output.argmax(axis=1) == labels[idx]).sum())
        hist.loss.append(total_loss / n)
        hist.accuracy.append(correct / n)
        if config.validation is not None:
            xv, yv = config.validation
            yv = check_onehot(yv)
            pv = model.predict(xv)
            lv = yv.argmax(axis=1)
            hist.val_loss.append(cross_entropy(pv, yv))
            hist.val_accuracy.append(float((pv.argmax(axis=1) == lv).mean()))
            hist.val_top3.append(float(_topk_hits(pv, lv, 3).mean()))
        log.info("epoch %d/%d loss %.4f acc %.4f%s", epoch + 1, config.epochs, hist.loss[-1],
                 hist.accuracy[-1],
                 f" val_acc {hist.val_accuracy[-1]:.4f}" if hist.val_accuracy else "")
        if on_epoch is not None:
            on_epoch(epoch, hist)
        if config.stop_accuracy is not None and hist.accuracy[-1] >= config.stop_accuracy:
            break
    return hist
