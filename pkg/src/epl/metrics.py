"""Classification quality metrics and a 2D visual-separation score.

Accuracy and Cohen's kappa are computed from an explicit confusion matrix
(rows = truth, columns = prediction). Visual separation of an embedding is
quantified by k-NN label consistency: the mean fraction of each point's k
nearest neighbours that share its label.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .dataset import UNLABELED, LabelVector


class MetricError(ValueError):
    """Raised for empty or unlabeled inputs."""


def _label_array(labels) -> np.ndarray:
    if isinstance(labels, LabelVector):
        return labels.values
    return np.asarray(labels, dtype=np.int64)


@dataclass(frozen=True)
class ConfusionMatrix:
    """k x k count matrix; cell (i, j) counts truth i predicted as j."""

    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
            raise MetricError("confusion matrix must be square")
        if (counts < 0).any():
            raise MetricError("confusion counts must be non-negative")
        if counts.sum() < 1:
            raise MetricError("confusion matrix must count at least one sample")
        object.__setattr__(self, "counts", counts)

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    @property
    def class_count(self) -> int:
        return self.counts.shape[0]


def confusion(pred, truth, indices=None, class_count: int | None = None) -> ConfusionMatrix:
    """Count (truth, prediction) pairs over the given index set."""
    pred = _label_array(pred)
    truth = _label_array(truth)
    if indices is None:
        indices = np.arange(len(truth))
    indices = np.asarray(indices, dtype=np.int64)
    if indices.size == 0:
        raise MetricError("empty index set")
    p = pred[indices]
    t = truth[indices]
    if (p == UNLABELED).any() or (t == UNLABELED).any():
        bad = indices[(p == UNLABELED) | (t == UNLABELED)][0]
        raise MetricError(f"unlabeled sample {bad} in index set")
    k = class_count if class_count is not None else int(max(p.max(), t.max())) + 1
    counts = np.zeros((k, k), dtype=np.int64)
    np.add.at(counts, (t, p), 1)
    return ConfusionMatrix(counts)


def accuracy(cm: ConfusionMatrix) -> float:
    """Fraction of counted samples on the diagonal."""
    return float(np.trace(cm.counts)) / cm.n


def cohen_kappa(cm: ConfusionMatrix) -> float:
    """Chance-corrected agreement (p_o - p_e) / (1 - p_e).

    p_e is the product-of-marginals expected agreement. The degenerate
    single-cell matrix has p_o = p_e = 1 and is reported as the limit 1.
    """
    n = cm.n
    p_o = float(np.trace(cm.counts)) / n
    rows = cm.counts.sum(axis=1).astype(np.float64)
    cols = cm.counts.sum(axis=0).astype(np.float64)
    p_e = float(rows @ cols) / (n * n)
    if p_e >= 1.0:
        return 1.0
    return (p_o - p_e) / (1.0 - p_e)


def per_class_recall(cm: ConfusionMatrix) -> np.ndarray:
    """Diagonal over row sums; classes absent from the truth get recall 0."""
    rows = cm.counts.sum(axis=1).astype(np.float64)
    diag = np.diag(cm.counts).astype(np.float64)
    out = np.zeros(cm.class_count)
    present = rows > 0
    out[present] = diag[present] / rows[present]
    return out


@dataclass(frozen=True)
class ScoreReport:
    accuracy: float
    kappa: float
    per_class_recall: np.ndarray

    @classmethod
    def from_confusion(cls, cm: ConfusionMatrix) -> "ScoreReport":
        return cls(accuracy(cm), cohen_kappa(cm), per_class_recall(cm))

    def csv_row(self, dataset: str, method: str, seed: int) -> str:
        return f"{dataset},{method},{seed},{self.accuracy!r},{self.kappa!r}"


def knn_consistency(points, labels, k: int = 10) -> float:
    """Mean fraction of each point's k nearest neighbours sharing its label.

    Works on any n x m point array (2D embeddings or latent features).
    Distance ties are broken toward the lower index; k is capped at n - 1.
    """
    if hasattr(points, "coordinates"):
        points = points.coordinates
    points = np.asarray(points, dtype=np.float64)
    labels = _label_array(labels)
    n = points.shape[0]
    if labels.shape[0] != n:
        raise MetricError("labels must match points")
    if (labels == UNLABELED).any():
        raise MetricError("all points must be labeled")
    if n < 2:
        raise MetricError("need at least 2 points")
    k = min(k, n - 1)
    if k < 1:
        raise MetricError("neighbour count must be at least 1")
    dist = cdist(points, points)
    np.fill_diagonal(dist, np.inf)
    order = np.argsort(dist, axis=1, kind="stable")[:, :k]
    same = labels[order] == labels[:, None]
    return float(same.mean())
