"""Compare the compiled kernels against the numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import time

import numpy as np

from attop import backend
from attop.data import synthetic_gaussian
from attop.network import NetworkSpec, forward, init_weights, weighted_backward
from attop.thresholds import sorted_kth
from attop.trainer import TrainConfig, train


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def one_epoch(kernels):
    # training reads the module-level selection, so swap it for the duration
    saved = backend.kernels
    backend.kernels = kernels
    try:
        ds = synthetic_gaussian(400, 3600, overlap_fraction=0.05, seed=0)
        train(ds, NetworkSpec((2, 16, 1), ("tanh",)), TrainConfig(method="deeptoppush", epochs=1, seed=0))
    finally:
        backend.kernels = saved


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    try:
        names = ["python", "cython"] if backend.get("cython") else ["python"]
    except ImportError:
        names = ["python"]
    rng = np.random.default_rng(0)
    w = init_weights(NetworkSpec((20, 32, 16, 1), ("tanh", "relu")), 0)
    X_small, X_large = rng.normal(size=(37, 20)), rng.normal(size=(4000, 20))
    coeffs_small, coeffs_large = rng.normal(size=37), rng.normal(size=4000)
    values = rng.normal(size=100_000)

    cases = {
        "forward, 37 rows": lambda k: forward(w, X_small, kernels=k),
        "forward, 4000 rows": lambda k: forward(w, X_large, kernels=k),
        "weighted_backward, 37 rows": lambda k: weighted_backward(w, X_small, coeffs_small, kernels=k),
        "weighted_backward, 4000 rows": lambda k: weighted_backward(w, X_large, coeffs_large, kernels=k),
        "kth_largest, 1e5 values, k=1": lambda k: sorted_kth(values, 1, kernels=k),
        "kth_largest, 1e5 values, k=1000": lambda k: sorted_kth(values, 1000, kernels=k),
        "deeptoppush epoch, n=4000": one_epoch,
    }
    print(f"{'case':34s}" + "".join(f"{n:>12s}" for n in names) + ("     speedup" if len(names) == 2 else ""))
    for label, fn in cases.items():
        secs = [best_of(lambda: fn(backend.get(n)), args.repeats) for n in names]
        row = f"{label:34s}" + "".join(f"{s * 1e3:10.3f}ms" for s in secs)
        if len(secs) == 2:
            row += f"{secs[0] / secs[1]:11.1f}x"
        print(row)


if __name__ == "__main__":
    main()
