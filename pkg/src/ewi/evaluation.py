"""ROC and precision-recall curves over scored labels.

Curves are traced over every distinct score, from the strictest threshold
(``+inf``, nothing flagged) down to the smallest score (everything flagged).
Equal scores are grouped, so a tie block contributes one diagonal ROC segment
and one precision-recall step. ROC AUC is accumulated from integer counts,
which makes it bit-identical to the Mann-Whitney pair statistic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class ScoredLabels:
    scores: np.ndarray
    labels: np.ndarray
    days: np.ndarray = field(default=None)

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=float)
        labels = np.asarray(self.labels).astype(int)
        days = np.arange(len(scores)) if self.days is None else np.asarray(self.days)
        if not (len(scores) == len(labels) == len(days)):
            raise ValueError("scores, labels and days must have equal length")
        if not np.all(np.isfinite(scores)):
            raise ValueError("scores must be finite")
        if not np.all((labels == 0) | (labels == 1)):
            raise ValueError("labels must be 0 or 1")
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "days", days)

    def __len__(self):
        return len(self.scores)

    @property
    def n_pos(self) -> int:
        return int(self.labels.sum())

    @property
    def n_neg(self) -> int:
        return len(self.labels) - self.n_pos

    @property
    def positive_rate(self) -> float:
        return self.n_pos / len(self.labels) if len(self.labels) else float("nan")


@dataclass(frozen=True)
class Curve:
    thresholds: np.ndarray
    x: np.ndarray
    y: np.ndarray
    auc: float


def _cumulative_counts(sl: ScoredLabels):
    """Thresholds (descending, distinct) and TP/FP counts for ``score >= threshold``."""
    order = np.argsort(-sl.scores, kind="mergesort")
    s = sl.scores[order]
    y = sl.labels[order]
    tp = np.cumsum(y)
    fp = np.cumsum(1 - y)
    # last index of each run of equal scores
    last = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    return s[last], tp[last], fp[last]


def roc_curve(sl: ScoredLabels) -> Curve:
    P, N = sl.n_pos, sl.n_neg
    if P == 0 or N == 0:
        raise ValueError("ROC needs at least one positive and one negative label")
    thr, tp, fp = _cumulative_counts(sl)
    tp = np.r_[0, tp]
    fp = np.r_[0, fp]
    # trapezoid in count space: sum dFP * (TP_i + TP_{i-1}) / (2 P N)
    twice_area = int(np.sum(np.diff(fp) * (tp[1:] + tp[:-1])))
    auc = twice_area / (2 * P * N)
    return Curve(
        thresholds=np.r_[np.inf, thr],
        x=fp / N,
        y=tp / P,
        auc=float(auc),
    )


def pr_curve(sl: ScoredLabels) -> Curve:
    """Precision-recall curve; the AUC is average precision.

    The first point (threshold ``+inf``) is recall 0, precision 1.
    """
    P = sl.n_pos
    if P == 0:
        raise ValueError("PR curve needs at least one positive label")
    thr, tp, fp = _cumulative_counts(sl)
    precision = tp / (tp + fp)
    recall = tp / P
    d_recall = np.diff(np.r_[0.0, recall])
    auc = float(np.sum(d_recall * precision))
    return Curve(
        thresholds=np.r_[np.inf, thr],
        x=np.r_[0.0, recall],
        y=np.r_[1.0, precision],
        auc=auc,
    )


def mann_whitney_auc(scores, labels) -> float:
    """Fraction of positive/negative pairs ordered correctly, ties counting one half."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels).astype(bool)
    pos = scores[labels]
    neg = scores[~labels]
    wins = int((pos[:, None] > neg[None, :]).sum())
    ties = int((pos[:, None] == neg[None, :]).sum())
    return (2 * wins + ties) / (2 * len(pos) * len(neg))


def concat(parts) -> ScoredLabels:
    parts = list(parts)
    return ScoredLabels(
        scores=np.concatenate([p.scores for p in parts]),
        labels=np.concatenate([p.labels for p in parts]),
        days=np.concatenate([p.days for p in parts]),
    )


@dataclass(frozen=True)
class PooledMetrics:
    roc: Curve
    pr: Curve
    eps: float
    n: int
    fold_auc_roc: list
    fold_auc_pr: list
    degenerate_folds: list


def evaluate_fold_pool(folds) -> PooledMetrics:
    """Pool the scored labels of all folds and compute both curves.

    Folds lacking positives or negatives get ``None`` per-fold AUCs and are
    listed as degenerate; their labels still enter the pool.
    """
    folds = list(folds)
    if not folds or sum(len(f) for f in folds) == 0:
        raise ValueError("empty pool")
    fold_roc, fold_pr, degenerate = [], [], []
    for i, f in enumerate(folds):
        if f.n_pos == 0 or f.n_neg == 0:
            degenerate.append(i)
            fold_roc.append(None)
            fold_pr.append(None)
        else:
            fold_roc.append(roc_curve(f).auc)
            fold_pr.append(pr_curve(f).auc)
    pooled = concat(folds)
    return PooledMetrics(
        roc=roc_curve(pooled),
        pr=pr_curve(pooled),
        eps=pooled.positive_rate,
        n=len(pooled),
        fold_auc_roc=fold_roc,
        fold_auc_pr=fold_pr,
        degenerate_folds=degenerate,
    )
