import gzip

import numpy as np
import pytest

from attop.data import (
    BadMagicError,
    CellParseError,
    EmptyFileError,
    LabeledDataset,
    MissingColumnError,
    MulticlassDataset,
    TruncatedFileError,
    binarize,
    load_csv,
    load_idx,
    save_csv,
    synthetic_gaussian,
    toy_divergence_dataset,
    train_test_split,
    write_idx_images,
    write_idx_labels,
)
from attop.errors import DataFormatError, ValidationError
from attop.experiment import prepare_data
from attop.metrics import precision_at_recall
from attop.network import NetworkSpec, Weights, forward
from attop.objective import SurrogateSpec, naive_gradient
from attop.thresholds import ThresholdRule

# one 2x3 image, header and payload written out byte by byte
IMG_BYTES = bytes([0, 0, 8, 3, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 3, 0, 255, 51, 102, 0, 128])
LAB_BYTES = bytes([0, 0, 8, 1, 0, 0, 0, 1, 7])


# --- CSV -------------------------------------------------------------------

def test_csv_basic(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("f1,label,f2\n1.5,1,2\n0,0,3\n-1,0,4e-3\n")
    ds = load_csv(p, "label", 1)
    assert ds.n == 3 and ds.n_pos == 1 and ds.d == 2
    assert np.array_equal(ds.features, [[1.5, 2.0], [0.0, 3.0], [-1.0, 4e-3]])


def test_csv_string_labels_and_threshold(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("x,cls\n1,cat\n2,dog\n3,cat\n")
    assert load_csv(p, "cls", "cat").n_pos == 2
    q = tmp_path / "b.csv"
    q.write_text("x,activity\n1,0.2\n2,5.0\n3,6.5\n")
    assert list(load_csv(q, "activity", threshold=5.0).labels) == [False, True, True]


def test_csv_errors(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("f1,label\n1,0\nabc,1\n")
    with pytest.raises(CellParseError) as exc:
        load_csv(p, "label")
    assert exc.value.context["row"] == 3 and exc.value.context["column"] == "f1"
    with pytest.raises(MissingColumnError):
        load_csv(p, "target")
    e = tmp_path / "empty.csv"
    e.write_text("")
    with pytest.raises(EmptyFileError):
        load_csv(e, "label")
    h = tmp_path / "header.csv"
    h.write_text("f1,label\n")
    with pytest.raises(EmptyFileError):
        load_csv(h, "label")
    r = tmp_path / "ragged.csv"
    r.write_text("f1,f2,label\n1,2,0\n1,0\n")
    with pytest.raises(CellParseError):
        load_csv(r, "label")
    # all three are distinct structured errors
    assert len({MissingColumnError, CellParseError, EmptyFileError}) == 3
    assert issubclass(CellParseError, DataFormatError)


def test_csv_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    X = rng.normal(size=(25, 4)) * 10.0 ** rng.integers(-300, 300, size=(25, 4))
    ds = LabeledDataset(X, rng.random(25) < 0.4)
    save_csv(tmp_path / "r.csv", ds)
    back = load_csv(tmp_path / "r.csv", "label")
    assert back.features.tobytes() == ds.features.tobytes()
    assert np.array_equal(back.labels, ds.labels)


# --- IDX -------------------------------------------------------------------

def test_idx_hand_decoded_fixture(tmp_path):
    (tmp_path / "img").write_bytes(IMG_BYTES)
    (tmp_path / "lab").write_bytes(LAB_BYTES)
    raw = load_idx(tmp_path / "img", tmp_path / "lab")
    assert raw.features.shape == (1, 6)
    assert np.array_equal(raw.features[0], np.array([0, 255, 51, 102, 0, 128]) / 255.0)
    assert list(raw.labels) == [7]


def test_idx_gzip_and_writer(tmp_path):
    rng = np.random.default_rng(1)
    imgs = rng.integers(0, 256, size=(5, 4, 4), dtype=np.uint8)
    labs = np.array([0, 3, 0, 9, 1], dtype=np.uint8)
    write_idx_images(tmp_path / "i", imgs)
    write_idx_labels(tmp_path / "l", labs)
    for name in ("i", "l"):
        with gzip.open(tmp_path / f"{name}.gz", "wb") as fh:
            fh.write((tmp_path / name).read_bytes())
    a = load_idx(tmp_path / "i", tmp_path / "l")
    b = load_idx(tmp_path / "i.gz", tmp_path / "l.gz")
    assert np.array_equal(a.features, b.features)
    assert np.array_equal(a.features, imgs.reshape(5, 16) / 255.0)
    assert np.all((a.features >= 0) & (a.features <= 1))


def test_idx_errors(tmp_path):
    (tmp_path / "lab").write_bytes(LAB_BYTES)
    (tmp_path / "trunc").write_bytes(IMG_BYTES[:-2])
    with pytest.raises(TruncatedFileError):
        load_idx(tmp_path / "trunc", tmp_path / "lab")
    (tmp_path / "short").write_bytes(IMG_BYTES[:6])
    with pytest.raises(TruncatedFileError):
        load_idx(tmp_path / "short", tmp_path / "lab")
    (tmp_path / "magic").write_bytes(bytes([0, 0, 8, 1]) + IMG_BYTES[4:])
    with pytest.raises(BadMagicError):
        load_idx(tmp_path / "magic", tmp_path / "lab")
    (tmp_path / "img").write_bytes(IMG_BYTES)
    (tmp_path / "lab2").write_bytes(bytes([0, 0, 8, 1, 0, 0, 0, 2, 7, 1]))
    with pytest.raises(DataFormatError, match="counts differ"):
        load_idx(tmp_path / "img", tmp_path / "lab2")


def test_binarize():
    raw = MulticlassDataset(np.zeros((10, 2)), np.array([0, 1, 2, 0, 3, 0, 4, 5, 6, 7]))
    ds = binarize(raw, 0)
    assert ds.n_pos == 3 and ds.n_pos + ds.n_neg == ds.n == 10
    all_same = binarize(MulticlassDataset(np.zeros((4, 1)), np.full(4, 2)), 2)
    assert all_same.n_neg == 0
    with pytest.raises(ValidationError):
        binarize(raw, 9)


# --- synthetic -------------------------------------------------------------

def test_toy_dataset_properties():
    toy = toy_divergence_dataset()
    X, y = toy.features, toy.labels
    assert X[y, 0].mean() == 0.5
    assert X[~y, 0].max() == 3.0
    scores = forward(Weights(NetworkSpec((2, 1)), np.array([1.0, 0.0, 0.0])), X)
    above = np.count_nonzero(scores[~y] > scores[y].max())
    assert above == 1


@pytest.mark.parametrize("w", [0.25, 1.0, 4.0])
def test_toy_naive_gradient_exact(w):
    g = naive_gradient(Weights(NetworkSpec((2, 1)), np.array([w, 0.0, 0.0])), toy_divergence_dataset(),
                       ThresholdRule("toppush"), SurrogateSpec("hinge"))
    assert g[0] == -0.5


def test_gaussian_generator():
    a = synthetic_gaussian(50, 200, overlap_fraction=0.1, seed=4)
    b = synthetic_gaussian(50, 200, overlap_fraction=0.1, seed=4)
    assert a.features.tobytes() == b.features.tobytes() and np.array_equal(a.labels, b.labels)
    assert a.n_pos == 50 and a.n_neg == 200 and a.d == 2
    with pytest.raises(ValidationError):
        synthetic_gaussian(0, 10)
    with pytest.raises(ValidationError):
        synthetic_gaussian(5, 10, overlap_fraction=1.5)


def test_gaussian_separable_linear_model_reaches_full_recall():
    ds = synthetic_gaussian(100, 300, pos_mean=(20.0, 20.0), covariance_scale=1.0, seed=0)
    w = Weights(NetworkSpec((2, 1)), np.array([1.0, 1.0, 0.0]))
    assert precision_at_recall(forward(w, ds.features), ds.labels, 1.0) == 1.0


def test_split_properties():
    ds = synthetic_gaussian(40, 160, seed=2)
    train, test = train_test_split(ds, 0.25, seed=9)
    assert train.n + test.n == ds.n
    rows = {tuple(r) for r in ds.features}
    got = [tuple(r) for r in np.vstack([train.features, test.features])]
    assert len(set(got)) == ds.n and set(got) == rows
    assert abs(test.n_pos - 0.25 * ds.n_pos) <= 1 and abs(test.n_neg - 0.25 * ds.n_neg) <= 1
    again = train_test_split(ds, 0.25, seed=9)
    assert again[1].features.tobytes() == test.features.tobytes()
    for bad in (0.0, 1.0):
        with pytest.raises(ValidationError):
            train_test_split(ds, bad, 0)


def test_dataset_immutable_and_finite():
    ds = synthetic_gaussian(5, 5)
    with pytest.raises(ValueError):
        ds.features[0, 0] = 1.0
    with pytest.raises(ValidationError):
        LabeledDataset(np.array([[np.nan]]), [True])
    with pytest.raises(ValidationError):
        LabeledDataset(np.zeros((3, 1)), [True, False])


def test_prepare_data_pca_and_split():
    prepared = prepare_data({"kind": "gaussian", "n_pos": 30, "n_neg": 90, "pos_mean": [1, 1], "neg_mean": [0, 0],
                             "covariance_scale": 1.0, "overlap_fraction": 0.0, "seed": 0, "test_fraction": 0.2,
                             "split_seed": 0, "pca_components": 1})
    assert prepared.train.d == 1 and prepared.test.d == 1 and prepared.pca.k == 1
    assert prepared.train.n + prepared.test.n == 120
