"""Interpretable models on pivot space (DT_P, kNN_P) and raw space, plus
the grid search used to choose depth, pivot types and model kind."""

from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Union

import numpy as np

from . import kernels
from .data import DataError, DistanceMetric, LabeledDataset, distances_to, map_to_pivots, train_test_split
from .metrics import balanced_accuracy, confusion_matrix
from .tree import PIVOT_COMBOS, Hyperparams, extract_pivots, fit, predict_batch, split_pivots


# -- CART ---------------------------------------------------------------------

@dataclass(eq=False)
class CartLeaf:
    predicted_class: int
    class_counts: tuple
    depth: int

    is_leaf = True


@dataclass(eq=False)
class CartInternal:
    feature_index: int
    threshold: float
    left: "CartNode"
    right: "CartNode"
    class_counts: tuple
    depth: int

    is_leaf = False


CartNode = Union[CartLeaf, CartInternal]


@dataclass(eq=False)
class CartModel:
    root: CartNode
    n_features: int
    n_classes: int
    hyperparams: Hyperparams

    def predict(self, X) -> np.ndarray:
        return cart_predict_batch(self, X)


def cart_fit(features, labels, hyperparams: Optional[Hyperparams] = None,
             n_classes: Optional[int] = None) -> CartModel:
    """Greedy axis-parallel tree; ties go to the lowest feature index, then threshold."""
    F = np.ascontiguousarray(np.asarray(features, dtype=np.float64))
    y = np.asarray(labels, dtype=np.intp)
    if F.ndim != 2 or F.shape[0] == 0:
        raise DataError("cart_fit needs a non-empty 2-D feature matrix")
    if y.shape != (F.shape[0],):
        raise DataError(f"got {F.shape[0]} rows but {y.size} labels")
    hp = hyperparams or Hyperparams()
    c = max(n_classes or 0, int(y.max()) + 1)

    def grow(idx, depth):
        counts = np.bincount(y[idx], minlength=c)
        leaf = CartLeaf(int(np.argmax(counts)), tuple(int(v) for v in counts), depth)
        if (depth >= hp.max_depth or idx.size < hp.min_samples_split
                or np.count_nonzero(counts) <= 1 or F.shape[1] == 0):
            return leaf
        gain, thr, left = kernels.scan_columns(F[idx], y[idx], c, hp.min_samples_leaf, hp.impurity)
        valid = np.flatnonzero(left > 0)
        if valid.size == 0:
            return leaf
        j = int(valid[np.argmax(gain[valid])])
        go_left = F[idx, j] <= thr[j]
        return CartInternal(j, float(thr[j]), grow(idx[go_left], depth + 1), grow(idx[~go_left], depth + 1),
                            tuple(int(v) for v in counts), depth)

    return CartModel(grow(np.arange(F.shape[0]), 0), F.shape[1], c, hp)


def cart_predict_batch(model: CartModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.shape[1] != model.n_features:
        raise DataError(f"length mismatch: model expects {model.n_features} features, got {X.shape[1]}")
    out = np.empty(X.shape[0], dtype=np.intp)

    def route(node, rows):
        if rows.size == 0:
            return
        if node.is_leaf:
            out[rows] = node.predicted_class
            return
        left = X[rows, node.feature_index] <= node.threshold
        route(node.left, rows[left])
        route(node.right, rows[~left])

    route(model.root, np.arange(X.shape[0]))
    return out


def cart_predict(model: CartModel, row) -> int:
    row = np.asarray(row, dtype=np.float64)
    if row.ndim != 1:
        raise DataError("cart_predict expects a single row")
    return int(cart_predict_batch(model, row)[0])


# -- kNN ----------------------------------------------------------------------

@dataclass(eq=False)
class KnnModel:
    references: np.ndarray
    labels: np.ndarray
    k: int = 5
    metric: DistanceMetric = DistanceMetric.EUCLIDEAN
    n_classes: int = 0

    def __post_init__(self):
        self.references = np.ascontiguousarray(np.asarray(self.references, dtype=np.float64))
        self.labels = np.asarray(self.labels, dtype=np.intp)
        if self.references.ndim != 2 or self.references.shape[0] != self.labels.size:
            raise DataError("references must be an n x q matrix with one label per row")
        if not 1 <= self.k <= self.labels.size:
            raise DataError(f"k={self.k} must lie in [1, {self.labels.size}]")
        self.n_classes = max(self.n_classes, int(self.labels.max()) + 1)

    def predict(self, X) -> np.ndarray:
        return knn_predict_batch(self, X)


def knn_predict(model: KnnModel, row) -> int:
    """Majority vote of the k nearest references.

    Equidistant neighbours are taken in reference order; vote ties go to the
    lowest class id.
    """
    row = np.asarray(row, dtype=np.float64).ravel()
    if row.size != model.references.shape[1]:
        raise DataError(f"length mismatch: references have {model.references.shape[1]} columns, got {row.size}")
    d = distances_to(model.references, row, model.metric)
    nearest = np.argsort(d, kind="stable")[:model.k]
    votes = np.bincount(model.labels[nearest], minlength=model.n_classes)
    return int(np.argmax(votes))


def knn_predict_batch(model: KnnModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    return np.array([knn_predict(model, row) for row in X], dtype=np.intp)


# -- model selection ----------------------------------------------------------

MODEL_KINDS = ("PTC", "DT_P", "kNN_P")
RAW_KINDS = ("DT", "kNN")
DEFAULT_COMBOS = tuple(PIVOT_COMBOS)


@dataclass(frozen=True)
class GridRow:
    depth: int
    combo: str
    kind: str
    k: Optional[int]
    score: float
    n_pivots: int


@dataclass(frozen=True)
class ModelSelectionReport:
    rows: tuple
    chosen: GridRow
    seed: Optional[int] = None

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["depth", "combo", "kind", "k", "balanced_accuracy", "n_pivots", "chosen", "seed"])
        for r in self.rows:
            w.writerow([r.depth, r.combo, r.kind, "" if r.k is None else r.k, repr(r.score), r.n_pivots,
                        int(r == self.chosen), "" if self.seed is None else self.seed])
        return buf.getvalue()


def _majority(y, c):
    return int(np.argmax(np.bincount(y, minlength=c)))


def _score(y_true, y_pred, c) -> float:
    return balanced_accuracy(confusion_matrix(y_true, y_pred, c))


def _choose(rows) -> GridRow:
    best_i = 0
    for i, r in enumerate(rows):
        b = rows[best_i]
        if (-r.score, r.n_pivots, r.depth) < (-b.score, b.n_pivots, b.depth):
            best_i = i
    return rows[best_i]


def model_select(train: LabeledDataset, validation: Optional[LabeledDataset] = None,
                 metric=DistanceMetric.EUCLIDEAN, depths: Sequence[int] = (2, 3, 4),
                 combos: Sequence[str] = DEFAULT_COMBOS, kinds: Sequence[str] = MODEL_KINDS,
                 k_values: Sequence[int] = (5,), hyperparams: Optional[Hyperparams] = None,
                 seed: Optional[int] = 0, validation_fraction: float = 0.2,
                 threads: int = 1) -> ModelSelectionReport:
    """Grid search over depth x pivot combo x model kind (x k for kNN).

    When ``validation`` is omitted, ``train`` is split with a stratified
    shuffle controlled by ``seed``. PTC rows ignore the combo (the tree
    predicts with its own splitting pivots) but appear once per combo so the
    grid stays rectangular. The winner maximizes validation balanced
    accuracy, then prefers fewer pivots, then shallower trees.
    """
    depths, combos, kinds = list(depths), list(combos), list(kinds)
    if not depths or not combos or not kinds:
        raise ValueError("model selection grid is empty")
    for kind in kinds:
        if kind not in MODEL_KINDS + RAW_KINDS:
            raise ValueError(f"unknown model kind {kind!r}")
    for combo in combos:
        if combo not in PIVOT_COMBOS:
            raise ValueError(f"unknown pivot combo {combo!r}")
    if validation is None:
        tr, va = train_test_split(train, validation_fraction, seed=seed or 0)
        train, validation = train.subset(tr), train.subset(va)
    if validation.n == 0:
        raise ValueError("validation set is empty")
    if validation.m != train.m:
        raise DataError(f"train has {train.m} features, validation {validation.m}")
    c = max(train.n_classes, validation.n_classes)
    base = hyperparams or Hyperparams()
    Xv, yv = validation.X, validation.y

    def cells_for_depth(depth):
        hp = replace(base, max_depth=depth)
        model = fit(train, hp, metric)
        out = {}
        ptc_score = _score(yv, predict_batch(model, Xv), c)
        n_split = len(split_pivots(model))
        raw_tree = raw_knn = None
        for combo in combos:
            pivots = extract_pivots(model, combo)
            Zt = Zv = None
            if pivots:
                P = np.array([p.vector for p in pivots])
                Zt, Zv = map_to_pivots(train.X, P, metric), map_to_pivots(Xv, P, metric)
            for kind in kinds:
                if kind == "PTC":
                    out[(depth, combo, kind, None)] = (ptc_score, n_split)
                elif kind == "DT_P":
                    pred = (cart_fit(Zt, train.y, hp, c).predict(Zv) if pivots
                            else np.full(yv.size, _majority(train.y, c)))
                    out[(depth, combo, kind, None)] = (_score(yv, pred, c), len(pivots))
                elif kind == "kNN_P":
                    for k in k_values:
                        pred = (KnnModel(Zt, train.y, min(k, train.n), metric, c).predict(Zv) if pivots
                                else np.full(yv.size, _majority(train.y, c)))
                        out[(depth, combo, kind, k)] = (_score(yv, pred, c), len(pivots))
                elif kind == "DT":
                    if raw_tree is None:
                        raw_tree = _score(yv, cart_fit(train.X, train.y, hp, c).predict(Xv), c)
                    out[(depth, combo, kind, None)] = (raw_tree, 0)
                else:
                    if raw_knn is None:
                        raw_knn = {k: _score(yv, KnnModel(train.X, train.y, min(k, train.n), metric, c)
                                             .predict(Xv), c) for k in k_values}
                    for k in k_values:
                        out[(depth, combo, kind, k)] = (raw_knn[k], 0)
        return out

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(cells_for_depth, depths))
    else:
        parts = [cells_for_depth(d) for d in depths]
    cells = {}
    for part in parts:
        cells.update(part)

    rows = []
    for depth in depths:
        for combo in combos:
            for kind in kinds:
                for k in (k_values if kind in ("kNN_P", "kNN") else [None]):
                    score, n_piv = cells[(depth, combo, kind, k)]
                    rows.append(GridRow(depth, combo, kind, k, score, n_piv))
    return ModelSelectionReport(tuple(rows), _choose(rows), seed)
