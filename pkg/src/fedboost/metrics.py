"""Evaluation for heavily unbalanced binary classification.

Confusion counts use a strict probability threshold (score > t is a
positive call), matching the model's classification rule.  ROC-AUC is the
Mann-Whitney rank statistic with ties counted 1/2; AUPRC is the area
under the right-continuous precision-recall step curve.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class CurvePoint:
    threshold: float
    x: float  # recall
    y: float  # precision


def _check_pair(scores: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape:
        raise ValueError(f"length mismatch: {scores.shape} scores vs {labels.shape} labels")
    return scores, labels


def confusion(scores, labels, threshold: float = 0.5) -> ConfusionMatrix:
    scores, labels = _check_pair(scores, labels)
    pred = scores > threshold
    pos = labels == 1
    return ConfusionMatrix(
        tp=int(np.sum(pred & pos)),
        fp=int(np.sum(pred & ~pos)),
        fn=int(np.sum(~pred & pos)),
        tn=int(np.sum(~pred & ~pos)),
    )


def precision(cm: ConfusionMatrix) -> float:
    denom = cm.tp + cm.fp
    return cm.tp / denom if denom else 0.0


def recall(cm: ConfusionMatrix) -> float:
    denom = cm.tp + cm.fn
    return cm.tp / denom if denom else 0.0


def f1(cm: ConfusionMatrix) -> float:
    """2*TP / (2*TP + FP + FN); 0 when the denominator degenerates."""
    denom = 2 * cm.tp + cm.fp + cm.fn
    return 2 * cm.tp / denom if denom else 0.0


def accuracy(cm: ConfusionMatrix) -> float:
    return (cm.tp + cm.tn) / cm.total if cm.total else 0.0


def _check_both_classes(labels: np.ndarray) -> None:
    if not ((labels == 1).any() and (labels == 0).any()):
        raise ValueError("need both classes present to compute a ranking metric")


def _ranks_with_ties(scores: np.ndarray) -> np.ndarray:
    """1-based ranks, ties assigned the average rank of their group."""
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(scores.size, dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def roc_auc(scores, labels) -> float:
    """P(random positive outranks random negative), ties at 1/2."""
    scores, labels = _check_pair(scores, labels)
    _check_both_classes(labels)
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = scores.size - n_pos
    ranks = _ranks_with_ties(scores)
    return (ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def pr_curve(scores, labels) -> list[CurvePoint]:
    """Precision-recall points at every distinct score threshold,
    sorted by threshold (ascending)."""
    scores, labels = _check_pair(scores, labels)
    _check_both_classes(labels)
    order = np.argsort(-scores, kind="mergesort")
    s = scores[order]
    y = (labels[order] == 1).astype(np.int64)
    tp = np.cumsum(y)
    calls = np.arange(1, scores.size + 1)
    n_pos = int(tp[-1])
    # last index of each distinct-score run = points where the threshold drops
    last = np.nonzero(np.append(s[1:] != s[:-1], True))[0]
    points = [
        CurvePoint(threshold=float(s[i]), x=float(tp[i] / n_pos), y=float(tp[i] / calls[i]))
        for i in last
    ]
    points.sort(key=lambda p: p.threshold)
    return points


def pr_auc(scores, labels) -> float:
    """Area under the PR step curve: sum of precision * recall increment
    over descending thresholds, anchored at recall 0."""
    points = pr_curve(scores, labels)
    area = 0.0
    prev_recall = 0.0
    for p in reversed(points):  # descending threshold = increasing recall
        area += (p.x - prev_recall) * p.y
        prev_recall = p.x
    return area


def roc_curve(scores, labels) -> list[CurvePoint]:
    """(threshold, FPR, TPR) points at every distinct score threshold."""
    scores, labels = _check_pair(scores, labels)
    _check_both_classes(labels)
    order = np.argsort(-scores, kind="mergesort")
    s = scores[order]
    y = (labels[order] == 1).astype(np.int64)
    tp = np.cumsum(y)
    fp = np.cumsum(1 - y)
    n_pos = int(tp[-1])
    n_neg = int(fp[-1])
    last = np.nonzero(np.append(s[1:] != s[:-1], True))[0]
    points = [
        CurvePoint(threshold=float(s[i]), x=float(fp[i] / n_neg), y=float(tp[i] / n_pos))
        for i in last
    ]
    points.sort(key=lambda p: p.threshold)
    return points


def curve_to_csv(points: list[CurvePoint]) -> str:
    lines = ["threshold,x,y"]
    lines += [f"{p.threshold!r},{p.x!r},{p.y!r}" for p in points]
    return "\n".join(lines) + "\n"
