"""Thresholded surrogate objective and its gradients.

The objective is

    lambda1 * sum_{neg} l(z_i - t) + lambda2 * sum_{pos} l(t - z_i)

with t = z_{j*} an order statistic of the scores. Because t moves with the
weights, every gradient term carries a ``grad f(x_{j*})`` correction; the
naive variant drops it and is kept only to demonstrate why that fails.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyScopeError, ValidationError
from .network import Weights, forward, weighted_backward
from .thresholds import ThresholdResult, ThresholdRule, select_threshold

SURROGATES = ("hinge", "truncated_quadratic")
_SURROGATE_ALIASES = {"quadratic": "truncated_quadratic"}


@dataclass(frozen=True)
class SurrogateSpec:
    kind: str = "truncated_quadratic"

    def __post_init__(self):
        kind = _SURROGATE_ALIASES.get(self.kind, self.kind)
        if kind not in SURROGATES:
            raise ValidationError("unknown surrogate", kind=self.kind)
        object.__setattr__(self, "kind", kind)

    def to_json(self) -> str:
        return "hinge" if self.kind == "hinge" else "quadratic"


def surrogate_value(spec: SurrogateSpec, s):
    r = np.maximum(0.0, 1.0 + np.asarray(s, dtype=np.float64))
    out = r * r if spec.kind == "truncated_quadratic" else r
    return float(out) if out.ndim == 0 else out


def surrogate_derivative(spec: SurrogateSpec, s):
    s = np.asarray(s, dtype=np.float64)
    if spec.kind == "truncated_quadratic":
        out = 2.0 * np.maximum(0.0, 1.0 + s)
    else:
        # subgradient 0 at the kink s = -1
        out = (s > -1.0).astype(np.float64)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ObjectiveSpec:
    lambda1: float = 0.0
    lambda2: float = 1.0
    rule: ThresholdRule = field(default_factory=lambda: ThresholdRule("toppush"))
    surrogate: SurrogateSpec = field(default_factory=SurrogateSpec)
    class_normalized: bool = True

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0 or self.lambda1 + self.lambda2 <= 0:
            raise ValidationError("weights must be nonnegative with positive sum", lambda1=self.lambda1, lambda2=self.lambda2)

    def to_dict(self) -> dict:
        return {
            "lambda1": self.lambda1,
            "lambda2": self.lambda2,
            "rule": self.rule.to_dict(),
            "surrogate": self.surrogate.to_json(),
            "class_normalized": self.class_normalized,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ObjectiveSpec":
        return cls(
            lambda1=float(d.get("lambda1", 0.0)),
            lambda2=float(d.get("lambda2", 1.0)),
            rule=ThresholdRule.from_dict(d.get("rule", {"kind": "toppush"})),
            surrogate=SurrogateSpec(d.get("surrogate", "truncated_quadratic")),
            class_normalized=bool(d.get("class_normalized", True)),
        )


def _class_scales(labels, spec: ObjectiveSpec) -> tuple[float, float]:
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if spec.lambda1 > 0 and n_neg == 0:
        raise EmptyScopeError("false-positive term has no negatives")
    if spec.lambda2 > 0 and n_pos == 0:
        raise EmptyScopeError("false-negative term has no positives")
    if not spec.class_normalized:
        return spec.lambda1, spec.lambda2
    fp = spec.lambda1 / n_neg if n_neg else 0.0
    fn = spec.lambda2 / n_pos if n_pos else 0.0
    return fp, fn


def objective(scores, labels, t: float, spec: ObjectiveSpec) -> float:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    fp_scale, fn_scale = _class_scales(labels, spec)
    total = 0.0
    if spec.lambda1 > 0:
        total += fp_scale * float(np.sum(surrogate_value(spec.surrogate, scores[~labels] - t)))
    if spec.lambda2 > 0:
        total += fn_scale * float(np.sum(surrogate_value(spec.surrogate, t - scores[labels])))
    return total


def objective_at(weights: Weights, data, spec: ObjectiveSpec) -> tuple[float, ThresholdResult]:
    """Score ``data``, select its threshold, evaluate the objective."""
    scores = forward(weights, data.features)
    res = select_threshold(spec.rule, scores, data.labels)
    return objective(scores, data.labels, res.t, spec), res


def _loss_coefficients(scores, labels, t, spec: ObjectiveSpec):
    """Per-sample multipliers c_i of grad f(x_i); the j* sample gets -sum(c)."""
    fp_scale, fn_scale = _class_scales(labels, spec)
    coeffs = np.zeros_like(scores)
    if spec.lambda1 > 0:
        neg = ~labels
        coeffs[neg] = fp_scale * surrogate_derivative(spec.surrogate, scores[neg] - t)
    if spec.lambda2 > 0:
        coeffs[labels] = -fn_scale * surrogate_derivative(spec.surrogate, t - scores[labels])
    return coeffs


def thresholded_gradient(weights: Weights, data, spec: ObjectiveSpec, scores=None, clamp_k=False):
    """Chain-rule gradient on whatever set ``data`` holds (dataset or batch).

    Returns ``(gradient, ThresholdResult)``.
    """
    X = data.features
    labels = np.asarray(data.labels, dtype=bool)
    if scores is None:
        scores = forward(weights, X)
    res = select_threshold(spec.rule, scores, labels, clamp_k=clamp_k)
    coeffs = _loss_coefficients(scores, labels, res.t, spec)
    grad = weighted_backward(weights, X, coeffs)
    j_coeff = -float(np.sum(coeffs))
    if j_coeff != 0.0:
        grad = grad + weighted_backward(weights, X[res.j_star:res.j_star + 1], np.array([j_coeff]))
    return grad, res


def full_gradient(weights: Weights, dataset, spec: ObjectiveSpec):
    return thresholded_gradient(weights, dataset, spec)


def minibatch_toppush_gradient(weights: Weights, enhanced_batch, surrogate: SurrogateSpec, scores=None):
    """Delayed-sample TopPush estimator: t-hat is the top negative of the batch."""
    labels = np.asarray(enhanced_batch.labels, dtype=bool)
    if not labels.any():
        raise EmptyScopeError("minibatch has no positives")
    if labels.all():
        raise EmptyScopeError("minibatch has no negatives")
    spec = ObjectiveSpec(0.0, 1.0, ThresholdRule("toppush"), surrogate, True)
    return thresholded_gradient(weights, enhanced_batch, spec, scores=scores)


def naive_gradient(weights: Weights, dataset, rule: ThresholdRule, surrogate: SurrogateSpec, scores=None):
    """Gradient with the threshold frozen as a constant (no j* term)."""
    labels = np.asarray(dataset.labels, dtype=bool)
    if scores is None:
        scores = forward(weights, dataset.features)
    res = select_threshold(rule, scores, labels)
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise EmptyScopeError("naive gradient needs positives")
    coeffs = np.zeros_like(scores)
    coeffs[labels] = -surrogate_derivative(surrogate, res.t - scores[labels]) / n_pos
    return weighted_backward(weights, dataset.features, coeffs)


def baseline_gradient(weights: Weights, data, scores=None):
    """Gradient of the class-weighted cross-entropy; empty classes drop out."""
    labels = np.asarray(data.labels, dtype=bool)
    if scores is None:
        scores = forward(weights, data.features)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    sig = np.empty_like(scores)
    pos = scores >= 0
    sig[pos] = 1.0 / (1.0 + np.exp(-scores[pos]))
    ez = np.exp(scores[~pos])
    sig[~pos] = ez / (1.0 + ez)
    coeffs = np.zeros_like(scores)
    if n_pos:
        coeffs[labels] = -(1.0 - sig[labels]) / n_pos
    if n_neg:
        coeffs[~labels] = sig[~labels] / n_neg
    return weighted_backward(weights, data.features, coeffs)
