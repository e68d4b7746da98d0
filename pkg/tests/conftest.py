import numpy as np
import pytest

from attop import backend
from attop.data import LabeledDataset
from attop.network import NetworkSpec, Weights

BACKENDS = ["python"] + (["cython"] if backend.NAME == "cython" else [])

_ACCEPTANCE = {}


@pytest.fixture(params=BACKENDS)
def kernels(request):
    return backend.get(request.param)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_network(rng, max_dims=(10, 8, 4), activations=("tanh", "sigmoid", "identity")):
    """Random MLP spec with up to len(max_dims) layers before the scalar output."""
    depth = int(rng.integers(1, len(max_dims) + 1))
    dims = [int(rng.integers(1, max_dims[0] + 1))]
    for i in range(1, depth):
        dims.append(int(rng.integers(1, max_dims[i] + 1)))
    dims.append(1)
    acts = tuple(str(rng.choice(activations)) for _ in range(len(dims) - 2))
    spec = NetworkSpec(tuple(dims), acts)
    return Weights(spec, rng.normal(0.0, 0.7, spec.n_params))


def random_dataset(rng, n, d, n_pos=None):
    if n_pos is None:
        n_pos = int(rng.integers(2, n - 1))
    labels = np.zeros(n, bool)
    labels[rng.choice(n, n_pos, replace=False)] = True
    return LabeledDataset(rng.normal(size=(n, d)), labels)


# --- acceptance summary ------------------------------------------------------

def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.skipped):
        name = report.nodeid.split("::")[-1]
        outcome = "SKIP" if report.skipped else ("PASS" if report.passed else "FAIL")
        _ACCEPTANCE[name] = outcome


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_ACCEPTANCE):
        terminalreporter.write_line(f"{_ACCEPTANCE[name]:<5} {name}")
