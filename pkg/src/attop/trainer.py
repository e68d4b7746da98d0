"""Minibatch training for thresholded objectives.

One step: draw a minibatch, append the previous step's top-scoring negative
(the *delayed sample*), score, estimate the threshold on the enlarged batch,
take a gradient step. Without the delayed sample the threshold estimate is
just the batch maximum and jumps from batch to batch; with it the estimate is
a running maximum that settles on the true full-data threshold.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional

import numpy as np

from .errors import EmptyScopeError, ValidationError
from .metrics import auc_at_quantile, baseline_loss
from .network import Batch, NetworkSpec, Weights, forward, init_weights
from .objective import (
    ObjectiveSpec,
    SurrogateSpec,
    baseline_gradient,
    minibatch_toppush_gradient,
    naive_gradient,
    objective,
    thresholded_gradient,
)
from .thresholds import ThresholdRule, select_threshold

METHODS = ("deeptoppush", "deeptoppush0", "patmat", "patmat-np", "precatrec", "recatk", "toppushk", "baseline", "naive")
TOPPUSH_METHODS = ("deeptoppush", "deeptoppush0", "naive")
RULE_METHODS = ("patmat", "patmat-np", "precatrec", "recatk", "toppushk")
OPTIMIZERS = ("sgd", "sgd_momentum", "adam")

DEFAULT_ALPHA = 0.1
DEFAULT_K = 5


@dataclass(frozen=True)
class OptimizerSpec:
    kind: str = "sgd"
    learning_rate: float = 0.01
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.kind not in OPTIMIZERS:
            raise ValidationError("unknown optimizer", kind=self.kind)
        if not self.learning_rate > 0:
            raise ValidationError("learning_rate must be positive", learning_rate=self.learning_rate)


@dataclass
class OptimizerState:
    spec: OptimizerSpec
    step: int = 0
    m: Optional[np.ndarray] = None
    v: Optional[np.ndarray] = None


def optimizer_step(weights: Weights, gradient, state: OptimizerState):
    """Return ``(new_weights, new_state)``; inputs are left untouched."""
    g = np.asarray(gradient, dtype=np.float64)
    if g.shape != weights.flat.shape:
        raise ValidationError("gradient shape does not match weights", weights=weights.flat.shape, gradient=g.shape)
    spec = state.spec
    lr = spec.learning_rate
    t = state.step + 1
    if spec.kind == "sgd":
        return Weights(weights.spec, weights.flat - lr * g), replace(state, step=t)
    if spec.kind == "sgd_momentum":
        m = g.copy() if state.m is None else spec.momentum * state.m + g
        return Weights(weights.spec, weights.flat - lr * m), replace(state, step=t, m=m)
    m = (1 - spec.beta1) * g if state.m is None else spec.beta1 * state.m + (1 - spec.beta1) * g
    v = (1 - spec.beta2) * g * g if state.v is None else spec.beta2 * state.v + (1 - spec.beta2) * g * g
    m_hat = m / (1 - spec.beta1 ** t)
    v_hat = v / (1 - spec.beta2 ** t)
    new = weights.flat - lr * m_hat / (np.sqrt(v_hat) + spec.eps)
    return Weights(weights.spec, new), replace(state, step=t, m=m, v=v)


def default_objective(method: str, surrogate: SurrogateSpec | None = None) -> ObjectiveSpec:
    surrogate = surrogate or SurrogateSpec()
    if method in TOPPUSH_METHODS or method == "baseline":
        return ObjectiveSpec(0.0, 1.0, ThresholdRule("toppush"), surrogate)
    if method == "precatrec":
        return ObjectiveSpec(1.0, 0.0, ThresholdRule("precatrec", alpha=DEFAULT_ALPHA), surrogate)
    if method in ("recatk", "toppushk"):
        return ObjectiveSpec(0.0, 1.0, ThresholdRule(method, K=DEFAULT_K), surrogate)
    return ObjectiveSpec(0.0, 1.0, ThresholdRule(method, alpha=DEFAULT_ALPHA), surrogate)


@dataclass(frozen=True)
class TrainConfig:
    method: str = "deeptoppush"
    objective: Optional[ObjectiveSpec] = None
    epochs: int = 10
    minibatch_size: int = 32
    min_positives: int = 5
    optimizer: OptimizerSpec = field(default_factory=OptimizerSpec)
    seed: int = 0
    trace_thresholds: bool = False
    freeze_weights: bool = False

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValidationError("unknown method", method=self.method)
        if self.epochs < 0:
            raise ValidationError("epochs must be >= 0", epochs=self.epochs)
        if self.minibatch_size < 1:
            raise ValidationError("minibatch_size must be >= 1", minibatch_size=self.minibatch_size)
        if not 0 <= self.min_positives <= self.minibatch_size:
            raise ValidationError("need 0 <= min_positives <= minibatch_size", min_positives=self.min_positives,
                                  minibatch_size=self.minibatch_size)
        obj = self.objective
        if obj is None:
            object.__setattr__(self, "objective", default_objective(self.method))
        elif self.method in TOPPUSH_METHODS and obj.rule.kind != "toppush":
            raise ValidationError("method uses the toppush rule", method=self.method, rule=obj.rule.kind)
        elif self.method in RULE_METHODS and obj.rule.kind != self.method:
            raise ValidationError("objective rule does not match method", method=self.method, rule=obj.rule.kind)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "objective": self.objective.to_dict(),
            "epochs": self.epochs,
            "minibatch_size": self.minibatch_size,
            "min_positives": self.min_positives,
            "optimizer": {
                "kind": self.optimizer.kind,
                "learning_rate": self.optimizer.learning_rate,
                "momentum": self.optimizer.momentum,
                "beta1": self.optimizer.beta1,
                "beta2": self.optimizer.beta2,
                "eps": self.optimizer.eps,
            },
            "seed": self.seed,
            "trace_thresholds": self.trace_thresholds,
            "freeze_weights": self.freeze_weights,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {"method", "objective", "epochs", "minibatch_size", "min_positives", "optimizer", "seed",
                 "trace_thresholds", "freeze_weights"}
        kwargs = {k: v for k, v in d.items() if k in known}
        method = kwargs.get("method", "deeptoppush")
        if "objective" in kwargs and kwargs["objective"] is not None:
            od = default_objective(method).to_dict()
            od.update(kwargs["objective"])
            kwargs["objective"] = ObjectiveSpec.from_dict(od)
        if "optimizer" in kwargs:
            opt = kwargs["optimizer"]
            kwargs["optimizer"] = OptimizerSpec(**opt) if isinstance(opt, dict) else OptimizerSpec(kind=opt)
        return cls(**kwargs)


# --- minibatches -----------------------------------------------------------

def check_sampling(labels, size: int, min_positives: int) -> None:
    n = labels.size
    n_pos = int(np.count_nonzero(labels))
    if n == 0:
        raise ValidationError("dataset is empty")
    if n_pos < min_positives:
        raise ValidationError("dataset has fewer positives than one minibatch needs", n_pos=n_pos,
                              min_positives=min_positives)


def epoch_partition(labels, size: int, min_positives: int, rng) -> list[np.ndarray]:
    """Split one shuffled epoch into minibatches with >= min_positives positives.

    The shuffled indices are cut into ceil(n / size) near-equal batches. If
    there are enough positives, short batches are repaired by swapping a
    negative out for a positive from the batch with the largest surplus, so
    each index appears exactly once. Otherwise (rare positives) each negative
    still appears once and short batches are topped up by cycling through a
    shuffled pool of positives.
    """
    labels = np.asarray(labels, dtype=bool)
    check_sampling(labels, size, min_positives)
    n = labels.size
    n_batches = math.ceil(n / size)
    batches = [b.copy() for b in np.array_split(rng.permutation(n), n_batches)]
    if min_positives == 0:
        return batches

    n_pos = int(labels.sum())
    feasible = n_pos >= n_batches * min_positives and all(b.size >= min_positives for b in batches)
    if feasible:
        counts = np.array([int(labels[b].sum()) for b in batches])
        for i, b in enumerate(batches):
            while counts[i] < min_positives:
                surplus = counts - min_positives
                surplus[i] = -1
                donor = int(np.argmax(surplus))
                d = batches[donor]
                dp = int(np.flatnonzero(labels[d])[0])
                bn = int(np.flatnonzero(~labels[b])[0])
                d[dp], b[bn] = b[bn], d[dp]
                counts[i] += 1
                counts[donor] -= 1
        return batches

    pool = rng.permutation(np.flatnonzero(labels))
    cursor = 0
    out = []
    for b in batches:
        need = min_positives - int(labels[b].sum())
        extra = []
        tries = 0
        while need > 0:
            cand = pool[cursor % pool.size]
            cursor += 1
            tries += 1
            # avoid repeating a positive inside one batch while alternatives remain
            if (cand in b or cand in extra) and tries <= pool.size:
                continue
            extra.append(cand)
            need -= 1
        out.append(np.concatenate([b, np.asarray(extra, dtype=b.dtype)]) if extra else b)
    return out


def sample_minibatch(dataset, size: int, min_positives: int, rng) -> Batch:
    """First minibatch of a fresh epoch partition (see ``epoch_partition``)."""
    idx = epoch_partition(dataset.labels, size, min_positives, rng)[0]
    return Batch(dataset.features[idx], dataset.labels[idx], idx)


@dataclass(frozen=True)
class DelayedSample:
    present: bool = False
    features: Optional[np.ndarray] = None
    origin_index: int = -1
    score_at_selection: float = float("nan")


def enhance_minibatch(batch: Batch, delayed: DelayedSample) -> Batch:
    if not delayed.present or delayed.origin_index in batch.source_indices:
        return batch
    return Batch(
        np.vstack([batch.features, delayed.features]),
        np.r_[batch.labels, False],
        np.r_[batch.source_indices, delayed.origin_index],
    )


def update_delayed(batch: Batch, scores) -> DelayedSample:
    """Top-scoring negative of the batch; ``present=False`` if there is none."""
    neg = np.flatnonzero(~batch.labels)
    if neg.size == 0:
        return DelayedSample()
    res = select_threshold(ThresholdRule("toppush"), scores, batch.labels)
    j = res.j_star
    return DelayedSample(True, batch.features[j].copy(), int(batch.source_indices[j]), float(scores[j]))


# --- traces ----------------------------------------------------------------

@dataclass(frozen=True)
class TraceRecord:
    epoch: int
    step: int
    t_hat: float
    j_hat_origin: int
    t_true: Optional[float] = None


TRACE_HEADER = ("epoch", "step", "t_hat", "j_hat_origin", "t_true")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_trace_csv(path, records) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_HEADER)
        for r in records:
            w.writerow([_fmt(getattr(r, k)) for k in TRACE_HEADER])


def write_history_csv(path, history: list[dict]) -> None:
    if not history:
        cols = ["epoch", "train_objective", "test_objective"]
    else:
        cols = list(history[0])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for row in history:
            w.writerow([_fmt(row.get(c)) for c in cols])


class TrainResult(NamedTuple):
    weights: Weights
    trace: list
    history: list


def _dataset_objective(weights, data, config: TrainConfig) -> float:
    scores = forward(weights, data.features)
    if config.method == "baseline":
        return baseline_loss(scores, data.labels)
    res = select_threshold(config.objective.rule, scores, data.labels)
    return objective(scores, data.labels, res.t, config.objective)


def _history_row(epoch, weights, dataset, test, config, quantiles):
    row = {"epoch": epoch, "train_objective": _dataset_objective(weights, dataset, config),
           "test_objective": _dataset_objective(weights, test, config) if test is not None else None}
    train_scores = forward(weights, dataset.features)
    test_scores = forward(weights, test.features) if test is not None else None
    for a in quantiles:
        row[f"train_auc_at_quantile_{a:g}"] = auc_at_quantile(train_scores, dataset.labels, a)
        row[f"test_auc_at_quantile_{a:g}"] = (
            auc_at_quantile(test_scores, test.labels, a) if test is not None else None
        )
    return row


def _step_gradient(method, weights, batch, scores, config: TrainConfig):
    """Gradient and threshold result for one (possibly enhanced) batch.

    Returns ``(grad, res)``; ``grad`` is None when the step must be skipped.
    """
    surrogate = config.objective.surrogate
    labels = batch.labels
    if method == "baseline":
        return baseline_gradient(weights, batch, scores=scores), None
    if method in ("deeptoppush", "deeptoppush0"):
        res = select_threshold(ThresholdRule("toppush"), scores, labels)
        if not labels.any():
            return None, res
        grad, res = minibatch_toppush_gradient(weights, batch, surrogate, scores=scores)
        return grad, res
    if method == "naive":
        res = select_threshold(ThresholdRule("toppush"), scores, labels)
        if not labels.any():
            return None, res
        return naive_gradient(weights, batch, ThresholdRule("toppush"), surrogate, scores=scores), res
    try:
        return thresholded_gradient(weights, batch, config.objective, scores=scores, clamp_k=True)
    except EmptyScopeError:
        try:
            res = select_threshold(config.objective.rule, scores, labels, clamp_k=True)
        except EmptyScopeError:
            res = None
        return None, res


def train(dataset, spec: NetworkSpec, config: TrainConfig, test=None, initial_weights: Weights | None = None,
          quantiles=(0.1,), on_epoch=None) -> TrainResult:
    """Run ``config.epochs`` epochs; deterministic for a fixed config.

    ``history`` holds one row per epoch (index 0 is the untrained model) with
    train/test objective values and AUC@quantile columns.
    """
    if dataset.features.shape[1] != spec.input_dim:
        raise ValidationError("dataset dim does not match network input", dataset=dataset.features.shape[1],
                              network=spec.input_dim)
    method = config.method
    weights = initial_weights.copy() if initial_weights is not None else init_weights(spec, config.seed)
    if config.epochs == 0:
        return TrainResult(weights, [], [])
    check_sampling(dataset.labels, config.minibatch_size, config.min_positives)

    # sampling stream is independent of the method so ablations share partitions
    rng = np.random.default_rng([config.seed, 1])
    state = OptimizerState(config.optimizer)
    delayed = DelayedSample()
    use_delayed = method not in ("deeptoppush0", "baseline")
    rule = ThresholdRule("toppush") if method in TOPPUSH_METHODS else config.objective.rule
    X, y = dataset.features, dataset.labels

    trace: list[TraceRecord] = []
    history = [_history_row(0, weights, dataset, test, config, quantiles)]
    for epoch in range(1, config.epochs + 1):
        carry = np.empty(0, dtype=np.int64)
        for step, idx in enumerate(epoch_partition(y, config.minibatch_size, config.min_positives, rng)):
            if carry.size:
                idx = np.concatenate([carry, idx])
                carry = np.empty(0, dtype=np.int64)
            batch = Batch(X[idx], y[idx], idx)
            if use_delayed:
                batch = enhance_minibatch(batch, delayed)
            if method != "baseline" and batch.labels.all():
                # no negative to define a threshold; fold into the next batch
                carry = np.asarray(idx, dtype=np.int64)
                continue
            scores = forward(weights, batch)
            grad, res = _step_gradient(method, weights, batch, scores, config)
            if use_delayed:
                nxt = update_delayed(batch, scores)
                if nxt.present:
                    delayed = nxt
            if res is not None and method != "baseline":
                t_true = None
                if config.trace_thresholds:
                    t_true = select_threshold(rule, forward(weights, X), y).t
                trace.append(TraceRecord(epoch, step, float(res.t), int(batch.source_indices[res.j_star]), t_true))
            if grad is not None and not config.freeze_weights:
                weights, state = optimizer_step(weights, grad, state)
        history.append(_history_row(epoch, weights, dataset, test, config, quantiles))
        if on_epoch is not None:
            on_epoch(epoch, weights)
    return TrainResult(weights, trace, history)


def threshold_trace_comparison(dataset, spec: NetworkSpec, config: TrainConfig, initial_weights=None):
    """Per-step threshold estimates with and without the delayed sample.

    Both runs share the seed (hence the minibatch partitions). Rows are
    ``(epoch, step, t_deeptoppush, t_deeptoppush0, t_true)`` where ``t_true``
    is the full-data threshold under the deeptoppush run's current weights.
    """
    runs = {}
    for method in ("deeptoppush", "deeptoppush0"):
        cfg = replace(config, method=method, trace_thresholds=True,
                      objective=default_objective(method, config.objective.surrogate))
        runs[method] = {(r.epoch, r.step): r for r in train(dataset, spec, cfg, initial_weights=initial_weights).trace}
    keys = sorted(set(runs["deeptoppush"]) | set(runs["deeptoppush0"]))
    rows = []
    for k in keys:
        a = runs["deeptoppush"].get(k)
        b = runs["deeptoppush0"].get(k)
        rows.append({
            "epoch": k[0],
            "step": k[1],
            "t_deeptoppush": a.t_hat if a else None,
            "t_deeptoppush0": b.t_hat if b else None,
            "t_true": a.t_true if a else None,
        })
    return rows
