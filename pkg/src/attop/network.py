"""Dense feedforward scorer f(w; x), its parameter gradients, and persistence.

Parameters live in one flat float64 vector. Each layer owns a contiguous
slice: the weight matrix (out x in, row-major) followed by its bias.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from . import backend
from .errors import DataFormatError, DimensionError, ValidationError

ACTIVATIONS = ("identity", "relu", "tanh", "sigmoid")
_ACT_CODE = {name: code for code, name in enumerate(ACTIVATIONS)}

_BLOB_MAGIC = b"ATTOPW1\n"


@dataclass(frozen=True)
class NetworkSpec:
    layer_dims: tuple[int, ...]
    activations: tuple[str, ...] = ()

    def __post_init__(self):
        dims = tuple(int(d) for d in self.layer_dims)
        acts = tuple(str(a) for a in self.activations)
        object.__setattr__(self, "layer_dims", dims)
        object.__setattr__(self, "activations", acts)
        if len(dims) < 2:
            raise DimensionError("need at least input and output dims", layer_dims=dims)
        for i, d in enumerate(dims):
            if d < 1:
                raise DimensionError("layer dim must be >= 1", position=i, dim=d)
        if dims[-1] != 1:
            raise DimensionError("output dim must be 1", position=len(dims) - 1, dim=dims[-1])
        if len(acts) != len(dims) - 2:
            raise ValidationError(
                "one activation per hidden layer", hidden_layers=len(dims) - 2, activations=len(acts)
            )
        for a in acts:
            if a not in _ACT_CODE:
                raise ValidationError("unknown activation", activation=a)

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def n_params(self) -> int:
        d = self.layer_dims
        return sum(a * b + b for a, b in zip(d[:-1], d[1:]))

    def layer_slices(self):
        """Yield ``(weight_slice, bias_slice, (out, in))`` per layer."""
        off = 0
        for fan_in, fan_out in zip(self.layer_dims[:-1], self.layer_dims[1:]):
            w = slice(off, off + fan_in * fan_out)
            off += fan_in * fan_out
            b = slice(off, off + fan_out)
            off += fan_out
            yield w, b, (fan_out, fan_in)

    def to_dict(self) -> dict:
        return {"layer_dims": list(self.layer_dims), "activations": list(self.activations)}

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkSpec":
        try:
            return cls(tuple(d["layer_dims"]), tuple(d.get("activations", ())))
        except KeyError as exc:
            raise ValidationError("network spec missing field", field=exc.args[0]) from None

    # kernel-facing arrays
    def _dims_array(self):
        return np.asarray(self.layer_dims, dtype=np.int32)

    def _acts_array(self):
        return np.asarray([_ACT_CODE[a] for a in self.activations] or [0], dtype=np.int32)


@dataclass
class Weights:
    spec: NetworkSpec
    flat: np.ndarray

    def __post_init__(self):
        self.flat = np.ascontiguousarray(self.flat, dtype=np.float64)
        if self.flat.shape != (self.spec.n_params,):
            raise DimensionError(
                "flat vector length does not match spec",
                expected=self.spec.n_params,
                got=self.flat.shape,
            )

    @property
    def total_len(self) -> int:
        return self.flat.shape[0]

    def layers(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """Writable ``(W, b)`` views into the flat vector."""
        return [(self.flat[ws].reshape(shape), self.flat[bs]) for ws, bs, shape in self.spec.layer_slices()]

    def copy(self) -> "Weights":
        return Weights(self.spec, self.flat.copy())


@dataclass
class Batch:
    features: np.ndarray
    labels: np.ndarray
    source_indices: np.ndarray = field(default=None)

    def __post_init__(self):
        self.features = np.ascontiguousarray(np.atleast_2d(self.features), dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=bool)
        n = self.features.shape[0]
        if self.source_indices is None:
            self.source_indices = np.arange(n)
        self.source_indices = np.asarray(self.source_indices, dtype=np.int64)
        if self.labels.shape != (n,) or self.source_indices.shape != (n,):
            raise DimensionError(
                "batch fields disagree on row count",
                features=n,
                labels=self.labels.shape,
                source_indices=self.source_indices.shape,
            )

    def __len__(self):
        return self.features.shape[0]


def init_weights(spec: NetworkSpec, seed: int) -> Weights:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    flat = np.zeros(spec.n_params)
    for ws, _, (fan_out, fan_in) in spec.layer_slices():
        a = np.sqrt(6.0 / (fan_in + fan_out))
        flat[ws] = rng.uniform(-a, a, size=fan_in * fan_out)
    return Weights(spec, flat)


def _features(weights: Weights, x) -> np.ndarray:
    X = x.features if isinstance(x, Batch) else np.ascontiguousarray(np.atleast_2d(x), dtype=np.float64)
    if X.shape[1] != weights.spec.input_dim:
        raise DimensionError("feature dim does not match network input", expected=weights.spec.input_dim, got=X.shape[1])
    return X


def forward(weights: Weights, batch, kernels=None) -> np.ndarray:
    """Scores for every row of ``batch`` (a Batch or a feature matrix)."""
    X = _features(weights, batch)
    k = kernels or backend.kernels
    return k.mlp_forward(weights.flat, weights.spec._dims_array(), weights.spec._acts_array(), X)


def weighted_backward(weights: Weights, batch, coeffs, kernels=None) -> np.ndarray:
    """Sum_i coeffs[i] * grad_w f(w; x_i), accumulated in one pass."""
    X = _features(weights, batch)
    coeffs = np.ascontiguousarray(coeffs, dtype=np.float64)
    if coeffs.shape != (X.shape[0],):
        raise DimensionError("one coefficient per row required", rows=X.shape[0], coeffs=coeffs.shape)
    k = kernels or backend.kernels
    return k.mlp_weighted_backward(
        weights.flat, weights.spec._dims_array(), weights.spec._acts_array(), X, coeffs
    )


def score_gradient(weights: Weights, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    return weighted_backward(weights, x, np.ones(1))


# --- persistence -----------------------------------------------------------

def weights_to_bytes(weights: Weights) -> bytes:
    header = json.dumps(
        {"spec": weights.spec.to_dict(), "length": weights.total_len, "dtype": "<f8"},
        sort_keys=True,
    ).encode()
    return _BLOB_MAGIC + struct.pack("<I", len(header)) + header + weights.flat.astype("<f8").tobytes()


def weights_from_bytes(blob: bytes) -> Weights:
    if not blob.startswith(_BLOB_MAGIC):
        raise DataFormatError("not a weights blob (bad magic)")
    off = len(_BLOB_MAGIC)
    if len(blob) < off + 4:
        raise DataFormatError("truncated weights header")
    (hlen,) = struct.unpack_from("<I", blob, off)
    off += 4
    try:
        header = json.loads(blob[off:off + hlen])
    except ValueError as exc:
        raise DataFormatError("weights header is not JSON", detail=str(exc)) from None
    off += hlen
    spec = NetworkSpec.from_dict(header["spec"])
    payload = blob[off:]
    if len(payload) != 8 * header["length"]:
        raise DataFormatError("weights payload size mismatch", expected=8 * header["length"], got=len(payload))
    return Weights(spec, np.frombuffer(payload, dtype="<f8").astype(np.float64))


def save_weights(path, weights: Weights) -> None:
    with open(path, "wb") as fh:
        fh.write(weights_to_bytes(weights))


def load_weights(path) -> Weights:
    with open(path, "rb") as fh:
        return weights_from_bytes(fh.read())
