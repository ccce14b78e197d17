"""Backend selection for the split-scan kernel.

The compiled extension is used when it was built; set
``PIVOTTREE_PURE_PYTHON=1`` to force the numpy fallback.
"""

import math
import os
from functools import lru_cache

import numpy as np

from . import _kernels_py

_impl = _kernels_py
if os.environ.get("PIVOTTREE_PURE_PYTHON", "").strip() not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]
    except ImportError:  # extension not built
        _impl = _kernels_py

BACKEND = _impl.BACKEND

CRITERIA = {"gini": 0, "entropy": 1}


@lru_cache(maxsize=8)
def _log_table_cached(size: int) -> np.ndarray:
    table = np.zeros(size + 1, dtype=np.float64)
    for k in range(1, size + 1):
        table[k] = math.log2(k)
    table.setflags(write=False)
    return table


def log2_table(n: int) -> np.ndarray:
    """``table[k] == math.log2(k)`` for ``0 < k <= n``, ``table[0] == 0``."""
    size = 64
    while size < n:
        size *= 2
    return _log_table_cached(size)


def impurity_from_counts(counts, criterion: str = "gini") -> float:
    """Gini or entropy (bits) of a class-count vector.

    Entropy is evaluated as ``log2(n) - sum(c_k log2 c_k) / n`` so that every
    backend sees the same integer-indexed logarithms.
    """
    counts = [int(ck) for ck in counts]
    n = sum(counts)
    if n <= 0:
        raise ValueError("impurity of an empty label set is undefined")
    if CRITERIA[criterion] == 0:
        s = 0.0
        for ck in counts:
            p = ck / n
            s = s + p * p
        return 1.0 - s
    table = log2_table(n)
    s = 0.0
    nonzero = 0
    for ck in counts:
        s = s + float(ck) * table[ck]
        nonzero += ck > 0
    if nonzero <= 1:
        return 0.0
    return float(table[n] - s / n)


def scan_columns(columns: np.ndarray, labels: np.ndarray, n_classes: int, min_leaf: int,
                 criterion: str = "gini", backend=None):
    """Best threshold per column of ``columns`` (shape ``n x k``).

    Returns ``(gain, threshold, left_count)`` arrays of length ``k``;
    ``left_count == 0`` marks columns with no admissible threshold.
    """
    impl = _impl if backend is None else backend
    columns = np.asarray(columns, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.intp)
    n = columns.shape[0]
    order = np.argsort(columns, axis=0, kind="stable")
    vals = np.ascontiguousarray(np.take_along_axis(columns, order, axis=0))
    labs = np.ascontiguousarray(labels[order])
    parent = np.bincount(labels, minlength=n_classes).astype(np.intp)
    parent_imp = impurity_from_counts(parent, criterion)
    return impl.scan_sorted_columns(vals, labs, parent, parent_imp, int(min_leaf),
                                    CRITERIA[criterion], log2_table(n))
