"""Run configuration: network + training config + dataset descriptor.

A run config is a JSON object::

    {
      "network": {"layer_dims": [2, 1], "activations": []},
      "data": {"kind": "gaussian", "n_pos": 400, "n_neg": 3600, ...},
      "method": "deeptoppush", "epochs": 10, ...        # TrainConfig keys
    }

TrainConfig keys may also sit under a "train" key. Manifests written by
``attop train`` embed the full run config under "config" and are accepted
wherever a run config is.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace


from .data import (
    LabeledDataset,
    binarize,
    load_csv,
    load_idx,
    synthetic_gaussian,
    toy_divergence_dataset,
    train_test_split,
)
from .errors import ValidationError
from .network import NetworkSpec
from .pca import PcaModel, pca_fit, pca_transform
from .trainer import TrainConfig

DATA_KINDS = ("gaussian", "toy", "csv", "idx")

DEFAULT_DATA = {
    "kind": "gaussian",
    "n_pos": 400,
    "n_neg": 3600,
    "pos_mean": [1.5, 1.5],
    "neg_mean": [0.0, 0.0],
    "covariance_scale": 1.0,
    "overlap_fraction": 0.05,
    "seed": 0,
    "test_fraction": 0.25,
    "split_seed": 0,
}


@dataclass
class RunConfig:
    network: NetworkSpec
    train: TrainConfig
    data: dict = field(default_factory=lambda: dict(DEFAULT_DATA))

    def to_dict(self) -> dict:
        return {"network": self.network.to_dict(), "train": self.train.to_dict(), "data": dict(self.data)}

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        if "config" in d and isinstance(d["config"], dict):
            d = d["config"]
        if "network" not in d:
            raise ValidationError("run config needs a 'network' section")
        train_d = d.get("train")
        if train_d is None:
            train_d = {k: v for k, v in d.items() if k not in ("network", "data")}
        given = dict(d.get("data", {}))
        # defaults describe the synthetic task only; other kinds are taken as written
        data = {**DEFAULT_DATA, **given} if given.get("kind", "gaussian") == "gaussian" else given
        if data["kind"] not in DATA_KINDS:
            raise ValidationError("unknown data kind", kind=data["kind"])
        return cls(NetworkSpec.from_dict(d["network"]), TrainConfig.from_dict(train_d), data)

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            with open(path) as fh:
                return cls.from_dict(json.load(fh))
        except json.JSONDecodeError as exc:
            raise ValidationError("config is not valid JSON", path=str(path), detail=str(exc)) from None


@dataclass
class PreparedData:
    train: LabeledDataset
    test: LabeledDataset | None
    pca: PcaModel | None = None


def _load_base(desc: dict) -> LabeledDataset:
    kind = desc["kind"]
    if kind == "gaussian":
        return synthetic_gaussian(
            int(desc["n_pos"]), int(desc["n_neg"]), tuple(desc["pos_mean"]), tuple(desc["neg_mean"]),
            float(desc["covariance_scale"]), float(desc["overlap_fraction"]), int(desc["seed"]),
        )
    if kind == "toy":
        return toy_divergence_dataset()
    if kind == "csv":
        if "path" not in desc:
            raise ValidationError("csv data needs 'path'")
        return load_csv(desc["path"], desc.get("label_column", "label"), desc.get("positive_class", 1),
                        threshold=desc.get("threshold"))
    if kind == "idx":
        for key in ("images", "labels"):
            if key not in desc:
                raise ValidationError("idx data needs 'images' and 'labels'", missing=key)
        return binarize(load_idx(desc["images"], desc["labels"]), desc.get("positive_class", 0))
    raise ValidationError("unknown data kind", kind=kind)


def _load_test(desc: dict) -> LabeledDataset | None:
    if desc.get("test_images"):
        return binarize(load_idx(desc["test_images"], desc["test_labels"]), desc.get("positive_class", 0))
    if desc.get("test_path"):
        return load_csv(desc["test_path"], desc.get("label_column", "label"), desc.get("positive_class", 1),
                        threshold=desc.get("threshold"))
    return None


def prepare_data(desc: dict) -> PreparedData:
    """Load, split and (optionally) PCA-reduce the data a descriptor names."""
    base = _load_base(desc)
    test = _load_test(desc)
    if test is None and desc.get("test_fraction"):
        base, test = train_test_split(base, float(desc["test_fraction"]), int(desc.get("split_seed", 0)))
    model = None
    k = desc.get("pca_components")
    if k:
        model = pca_fit(base.features, int(k))
        base = base.with_features(pca_transform(model, base.features))
        if test is not None:
            test = test.with_features(pca_transform(model, test.features))
    return PreparedData(base, test, model)


def with_seed(cfg: RunConfig, seed: int) -> RunConfig:
    return replace(cfg, train=replace(cfg.train, seed=seed))


def with_method(cfg: RunConfig, method: str) -> RunConfig:
    from .trainer import default_objective

    obj = cfg.train.objective
    if method in ("deeptoppush", "deeptoppush0", "naive", "baseline"):
        new_obj = default_objective(method, obj.surrogate)
    elif obj.rule.kind == method:
        new_obj = obj
    else:
        new_obj = default_objective(method, obj.surrogate)
    return replace(cfg, train=replace(cfg.train, method=method, objective=new_obj))
