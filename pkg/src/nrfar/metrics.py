"""Frame-level scoring: confusion matrices and balanced accuracy."""

from __future__ import annotations

import numpy as np

from .errors import EvaluationError


def confusion_matrix(truth, pred, n_classes: int) -> np.ndarray:
    """Counts with rows = truth, columns = prediction."""
    truth = np.asarray(truth, dtype=np.int64)
    pred = np.asarray(pred, dtype=np.int64)
    if truth.shape != pred.shape:
        raise EvaluationError(f"length mismatch: {truth.shape} vs {pred.shape}")
    if truth.size and (truth.min() < 0 or truth.max() >= n_classes or pred.min() < 0 or pred.max() >= n_classes):
        raise EvaluationError("labels outside the class range")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (truth, pred), 1)
    return cm


def balanced_accuracy_from_confusion(cm: np.ndarray) -> float:
    """Macro recall over the classes that occur in the ground truth."""
    cm = np.asarray(cm)
    support = cm.sum(axis=1)
    present = support > 0
    if not present.any():
        raise EvaluationError("no ground-truth samples")
    recall = np.diag(cm)[present] / support[present]
    return float(recall.mean())


def balanced_accuracy(truth, pred, n_classes: int | None = None) -> float:
    truth = np.asarray(truth, dtype=np.int64)
    pred = np.asarray(pred, dtype=np.int64)
    if truth.shape != pred.shape:
        raise EvaluationError(f"length mismatch: {truth.shape} vs {pred.shape}")
    if n_classes is None:
        n_classes = int(max(truth.max(initial=0), pred.max(initial=0))) + 1
    return balanced_accuracy_from_confusion(confusion_matrix(truth, pred, n_classes))


def row_normalized(cm: np.ndarray) -> np.ndarray:
    cm = np.asarray(cm, dtype=np.float64)
    support = cm.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(support > 0, cm / np.where(support > 0, support, 1), 0.0)
    return out
