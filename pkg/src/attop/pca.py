"""Principal components by power iteration with deflation.

The covariance is never materialised: products ``C v`` go through the
centred data, which keeps wide inputs (thousands of descriptors) cheap.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, DataFormatError, ValidationError

_MAGIC = b"ATTOPPCA1\n"


@dataclass
class PcaModel:
    mean: np.ndarray
    components: np.ndarray
    explained_variance: np.ndarray

    @property
    def k(self) -> int:
        return self.components.shape[0]


def _sign_normalise(v, eps=1e-12):
    nz = np.flatnonzero(np.abs(v) > eps)
    if nz.size and v[nz[0]] < 0:
        return -v
    return v


def pca_fit(features, k: int, tol: float = 1e-9, max_iter: int = 10_000, seed: int = 0) -> PcaModel:
    X = np.asarray(features, dtype=np.float64)
    n, d = X.shape
    if not 1 <= k <= d or k > n:
        raise ValidationError("need 1 <= k <= min(n, d)", k=k, n=n, d=d)
    mean = X.mean(axis=0)
    Xc = X - mean
    denom = max(n - 1, 1)

    def cov(v):
        return Xc.T @ (Xc @ v) / denom

    rng = np.random.default_rng(seed)
    comps = np.zeros((k, d))
    lams = np.zeros(k)
    scale = None
    for i in range(k):
        prev = comps[:i]
        v = rng.standard_normal(d)
        v -= prev.T @ (prev @ v)
        v /= np.linalg.norm(v)
        lam = 0.0
        residual = np.inf
        for _ in range(max_iter):
            # deflate the components already found, then re-orthogonalise
            w = cov(v) - prev.T @ (lams[:i] * (prev @ v))
            w -= prev.T @ (prev @ w)
            lam = float(v @ w)
            if scale is None:
                scale = max(abs(lam), np.finfo(float).tiny)
            residual = float(np.linalg.norm(w - lam * v))
            if residual <= tol * scale:
                break
            norm = np.linalg.norm(w)
            if norm <= tol * scale:
                # remaining spectrum is zero; v is an eigenvector already
                lam, residual = 0.0, 0.0
                break
            v = w / norm
        else:
            raise ConvergenceError("power iteration did not converge", component=i, residual=residual, tol=tol * scale)
        comps[i] = _sign_normalise(v / np.linalg.norm(v))
        lams[i] = max(lam, 0.0)
    order = np.argsort(-lams, kind="stable")
    return PcaModel(mean, comps[order], lams[order])


def pca_transform(model: PcaModel, features) -> np.ndarray:
    X = np.asarray(features, dtype=np.float64)
    if X.shape[1] != model.mean.shape[0]:
        raise ValidationError("feature dim does not match the PCA model", expected=model.mean.shape[0], got=X.shape[1])
    return (X - model.mean) @ model.components.T


def save_pca(path, model: PcaModel) -> None:
    k, d = model.components.shape
    header = json.dumps({"k": k, "d": d, "dtype": "<f8"}).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC + struct.pack("<I", len(header)) + header)
        for arr in (model.mean, model.explained_variance, model.components):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_pca(path) -> PcaModel:
    with open(path, "rb") as fh:
        blob = fh.read()
    if not blob.startswith(_MAGIC):
        raise DataFormatError("not a PCA model file", path=str(path))
    off = len(_MAGIC)
    (hlen,) = struct.unpack_from("<I", blob, off)
    off += 4
    header = json.loads(blob[off:off + hlen])
    off += hlen
    k, d = header["k"], header["d"]
    data = np.frombuffer(blob, dtype="<f8", offset=off)
    if data.size != d + k + k * d:
        raise DataFormatError("PCA payload size mismatch", expected=d + k + k * d, got=data.size)
    return PcaModel(data[:d].copy(), data[d + k:].reshape(k, d).copy(), data[d:d + k].copy())
