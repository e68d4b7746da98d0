"""Datasets: loaders (CSV, IDX), one-vs-rest binarisation, synthetic sets, splits."""

from __future__ import annotations

import csv
import gzip
import math
import struct
from dataclasses import dataclass

import numpy as np

from .errors import DataFormatError, ValidationError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class MissingColumnError(DataFormatError):
    pass


class CellParseError(DataFormatError):
    pass


class EmptyFileError(DataFormatError):
    pass


class TruncatedFileError(DataFormatError):
    pass


class BadMagicError(DataFormatError):
    pass


@dataclass(frozen=True)
class LabeledDataset:
    features: np.ndarray
    labels: np.ndarray
    name: str = "dataset"

    def __post_init__(self):
        X = np.ascontiguousarray(np.atleast_2d(self.features), dtype=np.float64)
        y = np.ascontiguousarray(self.labels, dtype=bool)
        if X.shape[0] != y.shape[0] or y.ndim != 1:
            raise ValidationError("features and labels differ in length", features=X.shape, labels=y.shape)
        if not np.all(np.isfinite(X)):
            raise ValidationError("features must be finite", name=self.name)
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)

    @property
    def n(self) -> int:
        return self.labels.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def n_pos(self) -> int:
        return int(self.labels.sum())

    @property
    def n_neg(self) -> int:
        return self.n - self.n_pos

    def subset(self, idx, name=None) -> "LabeledDataset":
        idx = np.asarray(idx)
        return LabeledDataset(self.features[idx], self.labels[idx], name or self.name)

    def with_features(self, features, name=None) -> "LabeledDataset":
        return LabeledDataset(features, self.labels, name or self.name)


@dataclass(frozen=True)
class MulticlassDataset:
    features: np.ndarray
    labels: np.ndarray
    name: str = "multiclass"


# --- CSV -------------------------------------------------------------------

def _matches(cell: str, positive_value) -> bool:
    if isinstance(positive_value, str):
        if cell == positive_value:
            return True
        try:
            return float(cell) == float(positive_value)
        except ValueError:
            return False
    try:
        return float(cell) == float(positive_value)
    except ValueError:
        return False


def load_csv(path, label_column, positive_value=1, threshold=None, name=None) -> LabeledDataset:
    """Read a headered CSV; every non-label column must be numeric.

    Labels are positive where the label cell equals ``positive_value``, or,
    when ``threshold`` is given, where the (numeric) label is >= threshold.
    The latter binarises a continuous activity column.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or not any(cell.strip() for cell in rows[0]):
        raise EmptyFileError("CSV file is empty", path=str(path))
    header = [h.strip() for h in rows[0]]
    body = [r for r in rows[1:] if r]
    if not body:
        raise EmptyFileError("CSV file has a header but no rows", path=str(path))
    if label_column not in header:
        raise MissingColumnError("label column not in header", column=label_column, header=header)
    li = header.index(label_column)
    feature_cols = [i for i in range(len(header)) if i != li]

    X = np.empty((len(body), len(feature_cols)))
    y = np.empty(len(body), dtype=bool)
    for r, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise CellParseError("wrong number of fields", row=r, expected=len(header), got=len(row))
        for j, c in enumerate(feature_cols):
            try:
                X[r - 2, j] = float(row[c])
            except ValueError:
                raise CellParseError("non-numeric cell", row=r, column=header[c], value=row[c]) from None
        cell = row[li].strip()
        if threshold is None:
            y[r - 2] = _matches(cell, positive_value)
        else:
            try:
                y[r - 2] = float(cell) >= threshold
            except ValueError:
                raise CellParseError("non-numeric label", row=r, column=label_column, value=cell) from None
    return LabeledDataset(X, y, name or str(path))


def save_csv(path, dataset: LabeledDataset, label_column="label") -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{j}" for j in range(dataset.d)] + [label_column])
        for x, lab in zip(dataset.features, dataset.labels):
            w.writerow([repr(float(v)) for v in x] + [1 if lab else 0])


# --- IDX -------------------------------------------------------------------

def _read_bytes(path) -> bytes:
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "rb") as fh:
        return fh.read()


def _idx_header(blob: bytes, magic: int, ndim: int, path):
    need = 4 * (1 + ndim)
    if len(blob) < need:
        raise TruncatedFileError("IDX header truncated", path=str(path), size=len(blob))
    got = struct.unpack_from(">I", blob, 0)[0]
    if got != magic:
        raise BadMagicError("bad IDX magic number", path=str(path), expected=hex(magic), got=hex(got))
    return struct.unpack_from(">" + "I" * ndim, blob, 4), need


def load_idx(images_path, labels_path) -> MulticlassDataset:
    """Pair of IDX files (ubyte images, ubyte labels) scaled to [0, 1]."""
    img = _read_bytes(images_path)
    (count, rows, cols), off = _idx_header(img, IDX_IMAGES_MAGIC, 3, images_path)
    size = count * rows * cols
    if len(img) - off < size:
        raise TruncatedFileError("IDX image payload truncated", path=str(images_path), expected=size, got=len(img) - off)
    lab = _read_bytes(labels_path)
    (lcount,), loff = _idx_header(lab, IDX_LABELS_MAGIC, 1, labels_path)
    if len(lab) - loff < lcount:
        raise TruncatedFileError("IDX label payload truncated", path=str(labels_path), expected=lcount, got=len(lab) - loff)
    if lcount != count:
        raise DataFormatError("image and label counts differ", images=count, labels=lcount)
    pixels = np.frombuffer(img, dtype=np.uint8, count=size, offset=off).reshape(count, rows * cols)
    labels = np.frombuffer(lab, dtype=np.uint8, count=lcount, offset=loff).astype(np.int64)
    return MulticlassDataset(pixels.astype(np.float64) / 255.0, labels, str(images_path))


def write_idx_images(path, images) -> None:
    images = np.asarray(images, dtype=np.uint8)
    count, rows, cols = images.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, count, rows, cols))
        fh.write(images.tobytes())


def write_idx_labels(path, labels) -> None:
    labels = np.asarray(labels, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABELS_MAGIC, labels.size))
        fh.write(labels.tobytes())


def binarize(raw: MulticlassDataset, positive_class) -> LabeledDataset:
    labels = np.asarray(raw.labels)
    mask = labels == positive_class
    if not mask.any():
        raise ValidationError("positive class does not occur", positive_class=positive_class)
    return LabeledDataset(raw.features, mask, f"{raw.name}[{positive_class}-vs-rest]")


# --- synthetic -------------------------------------------------------------

def toy_divergence_dataset() -> LabeledDataset:
    """Six 2D points on which a fixed-threshold gradient diverges.

    Positives (0, 1), (1, 1); negatives at x2 = -1 with first coordinates
    -3, -2, -1, 3. For w = (w, 0), w > 0 the top negative scores 3w.
    """
    X = np.array([[0.0, 1.0], [1.0, 1.0], [-3.0, -1.0], [-2.0, -1.0], [-1.0, -1.0], [3.0, -1.0]])
    y = np.array([True, True, False, False, False, False])
    return LabeledDataset(X, y, "toy-divergence")


def synthetic_gaussian(n_pos, n_neg, pos_mean=(1.5, 1.5), neg_mean=(0.0, 0.0), covariance_scale=1.0,
                       overlap_fraction=0.0, seed=0) -> LabeledDataset:
    """Two isotropic 2D Gaussian clouds; a fraction of the negatives is drawn
    from the positive cloud, planting hard negatives in the top region."""
    if n_pos < 1 or n_neg < 1:
        raise ValidationError("both classes need at least one sample", n_pos=n_pos, n_neg=n_neg)
    if not 0.0 <= overlap_fraction <= 1.0:
        raise ValidationError("overlap_fraction must lie in [0, 1]", overlap_fraction=overlap_fraction)
    if covariance_scale <= 0:
        raise ValidationError("covariance_scale must be positive", covariance_scale=covariance_scale)
    rng = np.random.default_rng(seed)
    sd = math.sqrt(covariance_scale)
    pos_mean = np.asarray(pos_mean, dtype=np.float64)
    neg_mean = np.asarray(neg_mean, dtype=np.float64)
    n_hard = int(round(overlap_fraction * n_neg))
    pos = pos_mean + sd * rng.standard_normal((n_pos, 2))
    neg = neg_mean + sd * rng.standard_normal((n_neg - n_hard, 2))
    hard = pos_mean + sd * rng.standard_normal((n_hard, 2))
    X = np.vstack([pos, neg, hard])
    y = np.r_[np.ones(n_pos, bool), np.zeros(n_neg, bool)]
    perm = rng.permutation(X.shape[0])
    return LabeledDataset(X[perm], y[perm], f"gaussian(seed={seed})")


def train_test_split(dataset: LabeledDataset, test_fraction: float, seed: int):
    """Stratified split; each class contributes round(test_fraction * count)."""
    if not 0.0 < test_fraction < 1.0:
        raise ValidationError("test_fraction must lie in (0, 1)", test_fraction=test_fraction)
    rng = np.random.default_rng(seed)
    test = []
    for cls in (True, False):
        idx = np.flatnonzero(dataset.labels == cls)
        idx = idx[rng.permutation(idx.size)]
        test.append(idx[: int(round(test_fraction * idx.size))])
    test_idx = np.sort(np.concatenate(test))
    train_mask = np.ones(dataset.n, bool)
    train_mask[test_idx] = False
    return (
        dataset.subset(np.flatnonzero(train_mask), f"{dataset.name}/train"),
        dataset.subset(test_idx, f"{dataset.name}/test"),
    )
