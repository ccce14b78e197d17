"""Compare the compiled split-scan kernel with the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Reports the raw column scan at a few node sizes and a full fit on the
Wisconsin breast cancer data (when scikit-learn is installed) under each
backend, and checks that both backends return identical results.
"""

import argparse
import time

import numpy as np

from pivottree import _kernels_py, kernels, tree
from pivottree.data import LabeledDataset

try:
    from pivottree import _kernels as _kernels_c
except ImportError:
    _kernels_c = None


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def bench_scan(repeat):
    rng = np.random.default_rng(0)
    print(f"{'n':>6} {'cols':>6} {'python s':>10} {'cython s':>10} {'speedup':>8}")
    for n in (50, 200, 800):
        cols = rng.normal(size=(n, n))
        y = rng.integers(0, 3, size=n)
        t_py, r_py = best_of(lambda: kernels.scan_columns(cols, y, 3, 3, backend=_kernels_py), repeat)
        if _kernels_c is None:
            print(f"{n:>6} {n:>6} {t_py:>10.4f} {'n/a':>10}")
            continue
        t_c, r_c = best_of(lambda: kernels.scan_columns(cols, y, 3, 3, backend=_kernels_c), repeat)
        assert all(np.array_equal(a, b) for a, b in zip(r_py, r_c)), "backends disagree"
        print(f"{n:>6} {n:>6} {t_py:>10.4f} {t_c:>10.4f} {t_py / t_c:>7.1f}x")


def bench_fit(repeat):
    try:
        from sklearn.datasets import load_breast_cancer
    except ImportError:
        print("scikit-learn not installed; skipping the fit benchmark")
        return
    raw = load_breast_cancer()
    data = LabeledDataset(raw.data, raw.target)
    hp = tree.Hyperparams(max_depth=4)
    results = {}
    original = kernels._impl
    for backend in [_kernels_py] + ([_kernels_c] if _kernels_c else []):
        kernels._impl = backend
        try:
            results[backend.BACKEND] = best_of(lambda: tree.fit(data, hp), repeat)
        finally:
            kernels._impl = original
    for name, (t, _) in results.items():
        print(f"fit breast cancer (n={data.n}, depth 4) with {name}: {t:.3f}s")
    if len(results) == 2:
        from pivottree.io import dumps_model
        a, b = (dumps_model(m) for _, m in results.values())
        assert a == b, "backends produced different trees"
        print("both backends produce byte-identical models")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    print(f"active backend: {kernels.BACKEND}")
    bench_scan(args.repeat)
    bench_fit(args.repeat)


if __name__ == "__main__":
    main()
