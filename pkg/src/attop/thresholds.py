"""Thresholds as order statistics of a subset of scores.

Each rule picks a scope (negatives, positives or everything) and a rank; the
threshold is the score at that rank and ``j_star`` is the sample holding it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import backend
from .errors import EmptyScopeError, ValidationError

KINDS = ("toppush", "toppushk", "patmat-np", "recatk", "patmat", "precatrec")

SCOPE = {
    "toppush": "negatives",
    "toppushk": "negatives",
    "patmat-np": "negatives",
    "recatk": "all",
    "patmat": "all",
    "precatrec": "positives",
}


@dataclass(frozen=True)
class ThresholdRule:
    kind: str
    K: Optional[int] = None
    alpha: Optional[float] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError("unknown threshold rule", kind=self.kind)
        if self.kind in ("toppushk", "recatk"):
            if self.K is None or int(self.K) != self.K or self.K < 1:
                raise ValidationError("rule needs an integer K >= 1", kind=self.kind, K=self.K)
        if self.kind in ("patmat", "patmat-np", "precatrec"):
            if self.alpha is None or not (0.0 < self.alpha <= 1.0):
                raise ValidationError("rule needs alpha in (0, 1]", kind=self.kind, alpha=self.alpha)

    @property
    def scope(self) -> str:
        return SCOPE[self.kind]

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.K is not None:
            d["K"] = int(self.K)
        if self.alpha is not None:
            d["alpha"] = float(self.alpha)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ThresholdRule":
        if "kind" not in d:
            raise ValidationError("rule missing 'kind'")
        return cls(d["kind"], d.get("K"), d.get("alpha"))


@dataclass(frozen=True)
class ThresholdResult:
    t: float
    j_star: int


def sorted_kth(values, k: int, kernels=None) -> tuple[float, int]:
    """k-th largest value and the smallest index holding it."""
    values = np.ascontiguousarray(values, dtype=np.float64)
    if not 1 <= k <= values.shape[0]:
        raise ValidationError("k out of range", k=k, n=values.shape[0])
    kern = kernels or backend.kernels
    return kern.kth_largest(values, int(k))


def quantile_index(n: int, alpha: float) -> int:
    if n < 1:
        raise ValidationError("n must be >= 1", n=n)
    # shave one part in 1e12 so that n * (k / n) cannot round up past k
    return min(max(math.ceil(n * alpha * (1.0 - 1e-12)), 1), n)


def scope_mask(rule: ThresholdRule, labels) -> np.ndarray:
    labels = np.asarray(labels, dtype=bool)
    if rule.scope == "negatives":
        return ~labels
    if rule.scope == "positives":
        return labels.copy()
    return np.ones_like(labels)


def rank_for(rule: ThresholdRule, scope_size: int, clamp_k: bool = False) -> int:
    """Rank (1-based, descending) that the rule selects inside its scope.

    ``clamp_k`` caps K at the scope size instead of failing; minibatch
    training uses it because a K meant for the full dataset may exceed the
    number of candidates in one batch.
    """
    if scope_size < 1:
        raise EmptyScopeError("threshold scope is empty", kind=rule.kind, scope=rule.scope)
    if rule.kind == "toppush":
        return 1
    if rule.kind in ("toppushk", "recatk"):
        if rule.K > scope_size:
            if clamp_k:
                return scope_size
            raise EmptyScopeError("K exceeds scope size", kind=rule.kind, K=rule.K, scope_size=scope_size)
        return int(rule.K)
    return quantile_index(scope_size, rule.alpha)


def select_threshold(rule: ThresholdRule, scores, labels, clamp_k: bool = False, kernels=None) -> ThresholdResult:
    scores = np.ascontiguousarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    if scores.shape != labels.shape:
        raise ValidationError("scores and labels differ in length", scores=scores.shape, labels=labels.shape)
    mask = scope_mask(rule, labels)
    idx = np.flatnonzero(mask)
    k = rank_for(rule, idx.size, clamp_k=clamp_k)
    t, local = sorted_kth(scores[idx], k, kernels=kernels)
    return ThresholdResult(t, int(idx[local]))
