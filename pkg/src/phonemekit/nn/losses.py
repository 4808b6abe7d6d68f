"""Categorical cross-entropy over one-hot targets."""

import numpy as np

from ..errors import ParameterError

PROB_FLOOR = 1e-12


def check_onehot(onehot) -> np.ndarray:
    y = np.asarray(onehot, dtype=np.float64)
    if y.ndim != 2:
        raise ParameterError("one-hot labels must be a 2-D array")
    if not (np.all((y == 0) | (y == 1)) and np.all(y.sum(axis=1) == 1)):
        raise ParameterError("each one-hot row needs exactly one 1 and zeros elsewhere")
    return y


def to_onehot(labels, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise ParameterError("label out of range")
    y = np.zeros((labels.size, num_classes))
    y[np.arange(labels.size), labels] = 1.0
    return y


def cross_entropy(probs, onehot) -> float:
    """Mean of ``-ln p[true]`` with the probability floored at 1e-12."""
    y = check_onehot(onehot)
    p = np.asarray(probs, dtype=np.float64)
    if p.shape != y.shape:
        raise ParameterError(f"probs {p.shape} and labels {y.shape} differ in shape")
    p_true = (p * y).sum(axis=1)
    return float(-np.log(np.maximum(p_true, PROB_FLOOR)).mean())
