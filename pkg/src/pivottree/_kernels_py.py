"""Pure numpy implementation of the split-scan kernel.

Mirrors ``_kernels.pyx`` operation for operation so both backends return
bit-identical gains and thresholds.
"""

import numpy as np

BACKEND = "python"


def _impurity_rows(counts, sizes, criterion, log_table):
    sizes = sizes.astype(np.float64)
    s = np.zeros(counts.shape[0], dtype=np.float64)
    if criterion == 0:
        for k in range(counts.shape[1]):
            p = counts[:, k] / sizes
            s = s + p * p
        return 1.0 - s
    nonzero = np.zeros(counts.shape[0], dtype=np.intp)
    for k in range(counts.shape[1]):
        ck = counts[:, k]
        s = s + ck.astype(np.float64) * log_table[ck]
        nonzero += ck > 0
    out = log_table[sizes.astype(np.intp)] - s / sizes
    out[nonzero <= 1] = 0.0
    return out


def scan_sorted_columns(vals, labs, parent_counts, parent_impurity, min_leaf, criterion, log_table):
    """Best midpoint split for every pre-sorted column.

    Returns ``(gain, threshold, left_count)``; ``left_count == 0`` marks a
    column without any valid threshold.
    """
    n, k = vals.shape
    c = parent_counts.shape[0]
    gain_out = np.zeros(k, dtype=np.float64)
    thr_out = np.zeros(k, dtype=np.float64)
    left_out = np.zeros(k, dtype=np.intp)
    if n < 2:
        return gain_out, thr_out, left_out
    nl = np.arange(1, n, dtype=np.intp)
    nr = n - nl
    size_ok = (nl >= min_leaf) & (nr >= min_leaf)
    eye = np.eye(c, dtype=np.intp)
    for j in range(k):
        col = vals[:, j]
        valid = size_ok & (col[:-1] < col[1:])
        if not valid.any():
            continue
        pos = np.flatnonzero(valid)
        cum = np.cumsum(eye[labs[:, j]], axis=0)[:-1][pos]
        left_n = nl[pos]
        right_n = nr[pos]
        imp_l = _impurity_rows(cum, left_n, criterion, log_table)
        imp_r = _impurity_rows(parent_counts - cum, right_n, criterion, log_table)
        gain = parent_impurity - (left_n / n) * imp_l - (right_n / n) * imp_r
        gain = np.where(gain < 0.0, 0.0, gain)
        b = int(np.argmax(gain))
        i = pos[b]
        a, hi = col[i], col[i + 1]
        thr = 0.5 * (a + hi)
        if thr >= hi:
            thr = a
        gain_out[j] = gain[b]
        thr_out[j] = thr
        left_out[j] = left_n[b]
    return gain_out, thr_out, left_out
