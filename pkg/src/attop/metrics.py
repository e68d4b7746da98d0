"""Counting metrics at a threshold, precision@recall, PR curves, AUC@quantile.

Precision values in reports are percentages in [0, 100], matching how
results tables are usually quoted. An undefined precision (nothing predicted
positive) is ``None``, never a number.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .errors import EmptyScopeError, ValidationError
from .thresholds import quantile_index, sorted_kth

DEFAULT_RECALL_LEVELS = (0.05, 0.1, 0.2, 0.4, 0.6, 0.8)
DEFAULT_QUANTILES = (0.1, 0.2)


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def n_pos(self) -> int:
        return self.tp + self.fn

    @property
    def n_neg(self) -> int:
        return self.fp + self.tn


def _check(scores, labels):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    if scores.shape != labels.shape:
        raise ValidationError("scores and labels differ in length", scores=scores.shape, labels=labels.shape)
    return scores, labels


def confusion_at_threshold(scores, labels, t: float) -> ConfusionCounts:
    scores, labels = _check(scores, labels)
    above = scores >= t
    tp = int(np.count_nonzero(above & labels))
    fp = int(np.count_nonzero(above & ~labels))
    n_pos = int(labels.sum())
    return ConfusionCounts(tp=tp, fp=fp, fn=n_pos - tp, tn=labels.size - n_pos - fp)


def precision_recall(counts: ConfusionCounts) -> tuple[Optional[float], Optional[float]]:
    """``(precision, recall)``; precision is None when nothing is predicted positive."""
    predicted = counts.tp + counts.fp
    precision = counts.tp / predicted if predicted else None
    recall = counts.tp / counts.n_pos if counts.n_pos else None
    return precision, recall


def precision_at_recall(scores, labels, rho: float) -> float:
    """Precision at the largest threshold whose recall reaches ``rho``."""
    scores, labels = _check(scores, labels)
    pos = scores[labels]
    if pos.size == 0:
        raise EmptyScopeError("precision at recall needs positives")
    t, _ = sorted_kth(pos, quantile_index(pos.size, rho))
    precision, _ = precision_recall(confusion_at_threshold(scores, labels, t))
    return precision


def pr_curve(scores, labels) -> list[tuple[float, float]]:
    """One (recall, precision) point per distinct score, recall ascending."""
    scores, labels = _check(scores, labels)
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise EmptyScopeError("PR curve needs positives")
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    tp = np.cumsum(labels[order])
    predicted = np.arange(1, s.size + 1)
    # last position of each run of equal scores: everything >= that score is predicted
    ends = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    return [(tp[e] / n_pos, tp[e] / predicted[e]) for e in ends]


def top_order(scores) -> np.ndarray:
    """Indices by descending score, ties by smallest index."""
    scores = np.asarray(scores, dtype=np.float64)
    return np.lexsort((np.arange(scores.size), -scores))


def auc_at_quantile(scores, labels, alpha: float) -> float:
    """Normalised area under precision-among-top-tau over tau in (0, alpha].

    P is sampled at tau_k = k/n for k = 1..m with m = ceil(alpha n), held flat
    down to tau = 0, and integrated by the trapezoid rule. The area is divided
    by the integrated width m/n (equal to alpha whenever alpha n is an integer)
    and scaled to 100, so a perfect ranker scores exactly 100.
    """
    scores, labels = _check(scores, labels)
    n = scores.size
    if n < 1:
        raise ValidationError("auc_at_quantile needs at least one sample")
    if not 0.0 < alpha <= 1.0:
        raise ValidationError("alpha must lie in (0, 1]", alpha=alpha)
    m = quantile_index(n, alpha)
    hits = np.cumsum(labels[top_order(scores)][:m])
    prec = hits / np.arange(1, m + 1)
    # segments [0, 1/n] (flat) and [k/n, (k+1)/n]; width 1/n cancels against m/n
    area = prec[0] + 0.5 * float(np.sum(prec[1:] + prec[:-1]))
    return float(100.0 * area / m)


def baseline_loss(scores, labels) -> float:
    """Class-weighted cross-entropy of raw scores (log-sigmoid form)."""
    scores, labels = _check(scores, labels)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise EmptyScopeError("baseline loss needs both classes", n_pos=n_pos, n_neg=n_neg)
    # -log sigma(z) = log(1 + e^-z);  -log(1 - sigma(z)) = log(1 + e^z)
    return float(np.logaddexp(0.0, -scores[labels]).sum() / n_pos + np.logaddexp(0.0, scores[~labels]).sum() / n_neg)


@dataclass
class MetricsReport:
    precision_at_recall: list = field(default_factory=list)
    auc_at_quantile: list = field(default_factory=list)
    pr_curve: list = field(default_factory=list)
    confusion: Optional[ConfusionCounts] = None

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def build_report(scores, labels, recall_levels=DEFAULT_RECALL_LEVELS, quantiles=DEFAULT_QUANTILES, rule=None) -> MetricsReport:
    """Collect every metric for one scored set; percentages throughout."""
    from .thresholds import ThresholdRule, select_threshold

    recall_levels = sorted(recall_levels)
    par = []
    for rho in recall_levels:
        p = precision_at_recall(scores, labels, rho)
        par.append((rho, None if p is None else 100.0 * p))
    aucq = [(a, auc_at_quantile(scores, labels, a)) for a in sorted(quantiles)]
    curve = [(r, 100.0 * p) for r, p in pr_curve(scores, labels)]
    rule = rule or ThresholdRule("toppush")
    res = select_threshold(rule, scores, labels)
    return MetricsReport(par, aucq, curve, confusion_at_threshold(scores, labels, res.t))
