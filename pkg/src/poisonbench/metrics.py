"""Effectiveness and stealthiness measures for poisoning experiments.

Four run-level measures plus macro F-score:
  alc   mean per-epoch change of the training loss (positive = destabilized)
  aip   mean top-class softmax probability over a test set
  ttd   poisoned-minus-base training wall time
  pdm   base-minus-poisoned macro F-score
"""

from __future__ import annotations

import numpy as np

from .data import Dataset
from .errors import UsageError
from .nn import Model, forward_probs_batch

_EVAL_BATCH = 256


def alc(losses) -> float:
    """Average loss change: sum of consecutive differences over (n - 1)."""
    values = [float(x) for x in losses]
    if len(values) < 2:
        raise UsageError(f"alc needs at least 2 epoch losses, got {len(values)}")
    diffs = [values[i] - values[i - 1] for i in range(1, len(values))]
    return sum(diffs) / (len(values) - 1)


def _probs_over(model: Model, test: Dataset) -> np.ndarray:
    pixels = test.pixel_stack()
    chunks = [
        forward_probs_batch(model, pixels[start:start + _EVAL_BATCH])
        for start in range(0, len(pixels), _EVAL_BATCH)
    ]
    return np.concatenate(chunks, axis=0)


def aip(model: Model, test: Dataset) -> float:
    """Mean probability of the predicted class over the test set, in [1/K, 1]."""
    if len(test.instances) == 0:
        raise UsageError("aip needs a nonempty test set")
    probs = _probs_over(model, test)
    return float(np.mean(probs.max(axis=1)))


def confusion_matrix(model: Model, test: Dataset) -> np.ndarray:
    """K x K counts, rows true class, columns predicted class."""
    if len(test.instances) == 0:
        raise UsageError("confusion_matrix needs a nonempty test set")
    probs = _probs_over(model, test)
    predicted = probs.argmax(axis=1)
    k = model.arch.class_count
    cm = np.zeros((k, k), dtype=np.int64)
    np.add.at(cm, (test.labels(), predicted), 1)
    return cm


def macro_fscore(cm: np.ndarray) -> float:
    """Unweighted mean of per-class F1; a zero P or R denominator scores 0."""
    cm = np.asarray(cm)
    if cm.sum() <= 0:
        raise UsageError("confusion matrix must contain at least one count")
    scores = []
    for c in range(cm.shape[0]):
        tp = float(cm[c, c])
        predicted = float(cm[:, c].sum())
        actual = float(cm[c, :].sum())
        if predicted == 0.0 or actual == 0.0:
            scores.append(0.0)
            continue
        precision = tp / predicted
        recall = tp / actual
        scores.append(0.0 if precision + recall == 0.0 else 2.0 * precision * recall / (precision + recall))
    return float(np.mean(scores))


def ttd(base_seconds: float, poisoned_seconds: float) -> float:
    """Training time difference: poisoned minus base, may be negative."""
    return float(poisoned_seconds) - float(base_seconds)


def pdm(fscore_base: float, fscore_poisoned: float) -> float:
    """Performance degradation: base F-score minus poisoned F-score."""
    return float(fscore_base) - float(fscore_poisoned)
