"""PivotTree induction, prediction and explanation.

Splits test the distance between an instance and a pivot (a training
instance): ``d(x, pivot) <= threshold`` routes left ("similar enough"),
anything farther routes right.
"""

from __future__ import annotations

import enum
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Union

import numpy as np

from . import kernels
from .data import DataError, DistanceMetric, LabeledDataset, distances_to, pairwise_distances


class Role(str, enum.Enum):
    REPRESENTATIVE = "representative"
    DISCRIMINATIVE = "discriminative"
    USED_IN_SPLIT = "used_in_split"


# Named pivot-type filters used by the selector mode.
PIVOT_COMBOS = {
    "discriminative": frozenset({Role.DISCRIMINATIVE}),
    "representative": frozenset({Role.REPRESENTATIVE}),
    "both": frozenset({Role.REPRESENTATIVE, Role.DISCRIMINATIVE}),
    "splitting": frozenset({Role.USED_IN_SPLIT}),
}


def parse_roles(values) -> frozenset:
    """Accept role names, combo names, or :class:`Role` members."""
    if isinstance(values, (str, Role)):
        values = [values]
    roles = set()
    for v in values:
        if isinstance(v, Role):
            roles.add(v)
        elif v in PIVOT_COMBOS:
            roles |= PIVOT_COMBOS[v]
        else:
            try:
                roles.add(Role(v))
            except ValueError:
                raise ValueError(f"unknown pivot type {v!r}") from None
    return frozenset(roles)


@dataclass(frozen=True)
class Hyperparams:
    max_depth: int = 4
    min_samples_split: int = 5
    min_samples_leaf: int = 3
    impurity: str = "gini"
    candidate_types: frozenset = frozenset({Role.REPRESENTATIVE, Role.DISCRIMINATIVE})
    max_candidates_per_class: Optional[int] = None

    def __post_init__(self):
        types = parse_roles(self.candidate_types)
        object.__setattr__(self, "candidate_types", types)
        if int(self.max_depth) < 1:
            raise ValueError("max_depth must be >= 1")
        if int(self.min_samples_leaf) < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if int(self.min_samples_split) < 2:
            raise ValueError("min_samples_split must be >= 2")
        if self.impurity not in kernels.CRITERIA:
            raise ValueError(f"impurity must be one of {sorted(kernels.CRITERIA)}")
        if not types or not types <= {Role.REPRESENTATIVE, Role.DISCRIMINATIVE}:
            raise ValueError("candidate_types must be a non-empty subset of {representative, discriminative}")
        if self.max_candidates_per_class is not None and int(self.max_candidates_per_class) < 1:
            raise ValueError("max_candidates_per_class must be >= 1")


@dataclass(eq=False)
class PivotRecord:
    source_index: int
    vector: np.ndarray
    label: int
    roles: frozenset
    node_depth: int
    instance_id: Optional[str] = None

    @property
    def name(self) -> str:
        return self.instance_id if self.instance_id is not None else f"p{self.source_index}"


class SplitCandidate(NamedTuple):
    pivot_source_index: Optional[int]
    threshold: float
    gain: float
    left_count: int
    right_count: int


@dataclass(eq=False)
class Leaf:
    predicted_class: int
    class_counts: tuple
    depth: int

    is_leaf = True


@dataclass(eq=False)
class Internal:
    pivot: PivotRecord
    threshold: float
    left: "Node"
    right: "Node"
    class_counts: tuple
    depth: int

    is_leaf = False


Node = Union[Leaf, Internal]


@dataclass(eq=False)
class PivotTreeModel:
    root: Node
    all_pivots: list
    hyperparams: Hyperparams
    metric: DistanceMetric
    n_train: int
    m: int
    c: int
    class_names: Optional[tuple] = None
    _by_index: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._by_index = {p.source_index: p for p in self.all_pivots}

    def pivot(self, source_index: int) -> PivotRecord:
        return self._by_index[source_index]

    def predict(self, X) -> np.ndarray:
        return predict_batch(self, X)

    @property
    def depth(self) -> int:
        return tree_depth(self.root)

    def class_name(self, label: int) -> str:
        return self.class_names[label] if self.class_names else str(label)


def iter_nodes(node: Node):
    """Pre-order traversal."""
    stack = [node]
    while stack:
        cur = stack.pop()
        yield cur
        if not cur.is_leaf:
            stack.append(cur.right)
            stack.append(cur.left)


def tree_depth(node: Node) -> int:
    return max(n.depth for n in iter_nodes(node)) - node.depth


# -- impurity and gain -------------------------------------------------------

def _counts(labels, n_classes=None) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.intp)
    return np.bincount(labels, minlength=n_classes or 0)


def impurity(labels, kind: str = "gini") -> float:
    labels = np.asarray(labels, dtype=np.intp)
    if labels.size == 0:
        raise ValueError("impurity of an empty label set is undefined")
    return kernels.impurity_from_counts(_counts(labels), kind)


def information_gain(parent, left, right, kind: str = "gini") -> float:
    parent, left, right = (np.asarray(v, dtype=np.intp) for v in (parent, left, right))
    if Counter(parent.tolist()) != Counter(left.tolist()) + Counter(right.tolist()):
        raise ValueError("left and right do not partition the parent labels")
    if left.size == 0 or right.size == 0:
        raise ValueError("both sides of a split must be non-empty")
    n = parent.size
    gain = impurity(parent, kind) - (left.size / n) * impurity(left, kind) - (right.size / n) * impurity(right, kind)
    return gain if gain > 0.0 else 0.0


def best_threshold_for_pivot(distances, labels, hyperparams: Hyperparams = Hyperparams(),
                             pivot_source_index: Optional[int] = None,
                             n_classes: Optional[int] = None) -> Optional[SplitCandidate]:
    """Best midpoint threshold on one distance column, or ``None``."""
    distances = np.asarray(distances, dtype=np.float64).ravel()
    labels = np.asarray(labels, dtype=np.intp).ravel()
    if distances.shape != labels.shape:
        raise ValueError(f"length mismatch: {distances.size} distances vs {labels.size} labels")
    n = distances.size
    if n < hyperparams.min_samples_split:
        return None
    c = max(n_classes or 0, int(labels.max()) + 1)
    gain, thr, left = kernels.scan_columns(distances[:, None], labels, c,
                                           hyperparams.min_samples_leaf, hyperparams.impurity)
    if left[0] == 0:
        return None
    return SplitCandidate(pivot_source_index, float(thr[0]), float(gain[0]), int(left[0]), n - int(left[0]))


# -- candidate pivots ---------------------------------------------------------

def _medoid_positions(D: np.ndarray, y: np.ndarray, classes, src=None) -> dict:
    src = np.arange(y.size) if src is None else src
    out = {}
    for c in classes:
        members = np.flatnonzero(y == c)
        # fsum is correctly rounded, so tied distance multisets give tied sums
        sums = np.array([math.fsum(row) for row in D[np.ix_(members, members)].tolist()])
        out[c] = int(members[np.lexsort((src[members], sums))[0]])
    return out


def _make_record(X, y, src, pos, role, depth, ids=None) -> PivotRecord:
    source_index = int(src[pos])
    return PivotRecord(source_index=source_index, vector=X[pos].copy(), label=int(y[pos]),
                       roles=frozenset({role}), node_depth=depth,
                       instance_id=None if ids is None else ids[source_index])


def select_representative_pivots(X_node, y_node, source_indices=None,
                                 metric=DistanceMetric.EUCLIDEAN, D=None, depth: int = 0) -> list:
    """Per-class medoid of the node: one pivot per class present."""
    X_node = np.asarray(X_node, dtype=np.float64)
    y_node = np.asarray(y_node, dtype=np.intp)
    src = np.arange(len(y_node)) if source_indices is None else np.asarray(source_indices)
    if D is None:
        D = pairwise_distances(X_node, metric)
    medoids = _medoid_positions(D, y_node, np.unique(y_node), src)
    return [_make_record(X_node, y_node, src, pos, Role.REPRESENTATIVE, depth) for pos in medoids.values()]


def _candidate_positions(D, src, members, medoid, cap):
    if cap is None or members.size <= cap:
        return members
    order = np.lexsort((src[members], D[medoid, members]))
    return np.sort(members[order[:cap]])


def select_discriminative_pivots(X_node, y_node, source_indices=None, metric=DistanceMetric.EUCLIDEAN,
                                 hyperparams: Hyperparams = Hyperparams(), D=None, depth: int = 0,
                                 n_classes: Optional[int] = None) -> list:
    """Per-class instance whose distance column admits the best split.

    Returns ``(PivotRecord, SplitCandidate)`` pairs; classes without any
    admissible split are omitted.
    """
    X_node = np.asarray(X_node, dtype=np.float64)
    y_node = np.asarray(y_node, dtype=np.intp)
    src = np.arange(len(y_node)) if source_indices is None else np.asarray(source_indices)
    classes = np.unique(y_node)
    if classes.size < 2 or y_node.size < hyperparams.min_samples_split:
        return []
    if D is None:
        D = pairwise_distances(X_node, metric)
    c = max(n_classes or 0, int(y_node.max()) + 1)
    scan = _scan_positions(D, y_node, np.arange(y_node.size), c, hyperparams)
    return _discriminative_from_scan(X_node, y_node, src, D, scan, classes, hyperparams, depth)


def _scan_positions(D, y, positions, c, hp):
    positions = np.asarray(positions, dtype=np.intp)
    gain, thr, left = kernels.scan_columns(D[positions].T, y, c, hp.min_samples_leaf, hp.impurity)
    return {int(p): (gain[i], thr[i], int(left[i])) for i, p in enumerate(positions)}


def _discriminative_from_scan(X, y, src, D, scan, classes, hp, depth, medoids=None, ids=None):
    n = y.size
    out = []
    for c in classes:
        members = np.flatnonzero(y == c)
        if hp.max_candidates_per_class is not None:
            medoid = medoids[c] if medoids else _medoid_positions(D, y, [c], src)[c]
            members = _candidate_positions(D, src, members, medoid, hp.max_candidates_per_class)
        members = members[np.argsort(src[members], kind="stable")]
        best = None
        for pos in members:
            g, t, nl = scan[int(pos)]
            if nl == 0:
                continue
            # ascending source index, so strict > keeps the lowest index on ties
            if best is None or g > best[1].gain:
                best = (int(pos), SplitCandidate(int(src[pos]), float(t), float(g), nl, n - nl))
        if best is not None:
            out.append((_make_record(X, y, src, best[0], Role.DISCRIMINATIVE, depth, ids), best[1]))
    return out


def node_candidates(X_node, y_node, source_indices, hyperparams: Hyperparams, n_classes: int,
                    metric=DistanceMetric.EUCLIDEAN, depth: int = 0, ids=None):
    """Evaluate all candidate pivots of one node.

    Returns ``(best, candidates)`` where ``candidates`` maps source index to
    ``(PivotRecord, SplitCandidate or None)`` with roles merged, and ``best``
    is the winning :class:`SplitCandidate` (ties: lowest source index, then
    lowest threshold) or ``None``.
    """
    X_node = np.asarray(X_node, dtype=np.float64)
    y_node = np.asarray(y_node, dtype=np.intp)
    src = np.asarray(source_indices, dtype=np.intp)
    hp = hyperparams
    classes = np.unique(y_node)
    D = pairwise_distances(X_node, metric)
    want_rep = Role.REPRESENTATIVE in hp.candidate_types
    want_disc = Role.DISCRIMINATIVE in hp.candidate_types and classes.size >= 2

    medoids = _medoid_positions(D, y_node, classes, src) if (want_rep or hp.max_candidates_per_class) else {}
    if want_disc:
        if hp.max_candidates_per_class is None:
            positions = np.arange(y_node.size)
        else:
            positions = np.unique(np.concatenate(
                [_candidate_positions(D, src, np.flatnonzero(y_node == c), medoids[c],
                                      hp.max_candidates_per_class) for c in classes]
                + [np.array(list(medoids.values()), dtype=np.intp)]))
    else:
        positions = np.array(sorted(medoids.values()), dtype=np.intp)
    scan = _scan_positions(D, y_node, positions, n_classes, hp)

    def split_for(pos):
        g, t, nl = scan[pos]
        if nl == 0:
            return None
        return SplitCandidate(int(src[pos]), float(t), float(g), nl, y_node.size - nl)

    candidates = {}

    def add(record, split):
        prev = candidates.get(record.source_index)
        if prev is not None:
            record.roles = prev[0].roles | record.roles
        candidates[record.source_index] = (record, split)

    if want_rep:
        for c in classes:
            pos = medoids[c]
            add(_make_record(X_node, y_node, src, pos, Role.REPRESENTATIVE, depth, ids), split_for(pos))
    if want_disc:
        for record, split in _discriminative_from_scan(X_node, y_node, src, D, scan, classes, hp,
                                                       depth, medoids, ids):
            add(record, split)

    best = None
    for record, split in candidates.values():
        if split is None:
            continue
        if best is None or (-split.gain, split.pivot_source_index, split.threshold) < \
                (-best.gain, best.pivot_source_index, best.threshold):
            best = split
    return best, candidates, D


# -- induction ----------------------------------------------------------------

def fit(data: LabeledDataset, hyperparams: Optional[Hyperparams] = None,
        metric=DistanceMetric.EUCLIDEAN) -> PivotTreeModel:
    """Greedily grow a PivotTree on ``data``."""
    if not isinstance(data, LabeledDataset):
        raise TypeError("fit expects a LabeledDataset")
    hp = hyperparams or Hyperparams()
    metric = DistanceMetric.parse(metric)
    X, y, c = data.X, data.y, data.n_classes
    registry: dict = {}

    def register(record: PivotRecord) -> PivotRecord:
        prev = registry.get(record.source_index)
        if prev is None:
            registry[record.source_index] = record
            return record
        prev.roles = prev.roles | record.roles
        prev.node_depth = min(prev.node_depth, record.node_depth)
        return prev

    def grow(idx: np.ndarray, depth: int) -> Node:
        y_node = y[idx]
        counts = np.bincount(y_node, minlength=c)
        leaf = Leaf(int(np.argmax(counts)), tuple(int(v) for v in counts), depth)
        if depth >= hp.max_depth or idx.size < hp.min_samples_split or np.count_nonzero(counts) <= 1:
            return leaf
        best, candidates, D = node_candidates(X[idx], y_node, idx, hp, c, metric, depth, data.ids)
        if best is None:
            return leaf
        records = {}
        for source_index, (record, _) in sorted(candidates.items()):
            records[source_index] = register(record)
        pivot = records[best.pivot_source_index]
        pivot.roles = pivot.roles | {Role.USED_IN_SPLIT}
        pos = int(np.searchsorted(idx, best.pivot_source_index))
        go_left = D[pos] <= best.threshold
        left = grow(idx[go_left], depth + 1)
        right = grow(idx[~go_left], depth + 1)
        return Internal(pivot, best.threshold, left, right, tuple(int(v) for v in counts), depth)

    root = grow(np.arange(data.n, dtype=np.intp), 0)
    pivots = [registry[k] for k in sorted(registry)]
    return PivotTreeModel(root=root, all_pivots=pivots, hyperparams=hp, metric=metric,
                          n_train=data.n, m=data.m, c=c, class_names=data.class_names)


# -- inference ----------------------------------------------------------------

def _check_dim(model: PivotTreeModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.ndim != 2 or X.shape[1] != model.m:
        raise DataError(f"dimension mismatch: model expects {model.m} features, got {X.shape[-1]}")
    return np.ascontiguousarray(X)


def predict_batch(model: PivotTreeModel, X) -> np.ndarray:
    X = _check_dim(model, X)
    out = np.empty(X.shape[0], dtype=np.intp)

    def route(node, rows):
        if rows.size == 0:
            return
        if node.is_leaf:
            out[rows] = node.predicted_class
            return
        d = distances_to(X[rows], node.pivot.vector, model.metric)
        left = d <= node.threshold
        route(node.left, rows[left])
        route(node.right, rows[~left])

    route(model.root, np.arange(X.shape[0]))
    return out


def predict(model: PivotTreeModel, x) -> int:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DataError("predict expects a single feature vector; use predict_batch for matrices")
    return int(predict_batch(model, x)[0])


class PathStep(NamedTuple):
    pivot_id: int
    pivot_label: int
    threshold: float
    relation: str
    distance: float


def decision_path(model: PivotTreeModel, x) -> list:
    """Comparisons made while routing ``x``; empty for a leaf-only model."""
    x = _check_dim(model, x)
    if x.shape[0] != 1:
        raise DataError("decision_path expects a single feature vector")
    steps = []
    node = model.root
    while not node.is_leaf:
        d = float(distances_to(x, node.pivot.vector, model.metric)[0])
        if d <= node.threshold:
            steps.append(PathStep(node.pivot.source_index, node.pivot.label, node.threshold, "<=", d))
            node = node.left
        else:
            steps.append(PathStep(node.pivot.source_index, node.pivot.label, node.threshold, ">", d))
            node = node.right
    return steps


def leaf_for(model: PivotTreeModel, x) -> Leaf:
    node = model.root
    for step in decision_path(model, x):
        node = node.left if step.relation == "<=" else node.right
    return node


def extract_pivots(model: PivotTreeModel, roles="both") -> list:
    """Pivot records having any of ``roles``, ordered by source index."""
    wanted = parse_roles(roles)
    if not wanted:
        raise ValueError("pivot filter is empty")
    return [p for p in model.all_pivots if p.roles & wanted]


def split_pivots(model: PivotTreeModel) -> list:
    return extract_pivots(model, {Role.USED_IN_SPLIT})


# -- DOT export -----------------------------------------------------------------

def _dot_quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n") + '"'


def export_dot(model: PivotTreeModel, precision: int = 4) -> str:
    lines = ["digraph PivotTree {", '  node [fontname="Helvetica"];', '  edge [fontname="Helvetica"];']
    ids = {}
    for node in iter_nodes(model.root):
        ids[id(node)] = f"n{len(ids)}"
    for node in iter_nodes(model.root):
        name = ids[id(node)]
        counts = ", ".join(str(v) for v in node.class_counts)
        if node.is_leaf:
            label = f"{model.class_name(node.predicted_class)}\n[{counts}]"
            lines.append(f"  {name} [shape=ellipse, label={_dot_quote(label)}];")
            continue
        p = node.pivot
        thr = f"{node.threshold:.{precision}g}"
        label = f"pivot {p.name} ({model.class_name(p.label)})\nd <= {thr}?\n[{counts}]"
        lines.append(f"  {name} [shape=box, label={_dot_quote(label)}];")
        lines.append(f"  {name} -> {ids[id(node.left)]} [label={_dot_quote('≤ ' + thr)}];")
        lines.append(f"  {name} -> {ids[id(node.right)]} [label={_dot_quote('> ' + thr)}];")
    lines.append("}")
    return "\n".join(lines) + "\n"
