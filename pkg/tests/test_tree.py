import numpy as np
import pydot
import pytest

from oracles import exhaustive_column_split, exhaustive_node_split, medoid_position, nested_loop_pairwise
from pivottree.data import LabeledDataset
from pivottree.io import dumps_model
from pivottree.tree import (
    Hyperparams,
    Role,
    best_threshold_for_pivot,
    decision_path,
    export_dot,
    extract_pivots,
    fit,
    impurity,
    information_gain,
    iter_nodes,
    leaf_for,
    node_candidates,
    predict,
    predict_batch,
    select_discriminative_pivots,
    select_representative_pivots,
)


class TestImpurity:
    def test_pure_gini(self):
        assert impurity([0, 0, 0, 0], "gini") == 0.0

    def test_uniform_binary_entropy(self):
        assert impurity([0, 0, 1, 1], "entropy") == 1.0

    def test_three_class_gini(self):
        assert impurity([0, 0, 1, 1, 2, 2], "gini") == pytest.approx(1 - 3 * (1 / 3) ** 2, abs=1e-15)

    def test_three_class_entropy(self):
        assert impurity([0, 1, 2], "entropy") == pytest.approx(np.log2(3), abs=1e-15)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            impurity([], "gini")


class TestInformationGain:
    def test_perfect_split(self):
        assert information_gain([0, 0, 1, 1], [0, 0], [1, 1], "entropy") == 1.0

    def test_ratio_preserving_split_has_no_gain(self):
        assert information_gain([0, 0, 1, 1], [0, 1], [0, 1], "gini") == 0.0
        assert information_gain([0, 0, 1, 1, 2, 2], [0, 1, 2], [0, 1, 2], "entropy") == 0.0

    def test_hand_computed_gini(self):
        # parent 3:2 -> 0.48; right child 1:2 -> 4/9; left pure
        expected = 0.48 - (3 / 5) * (4 / 9)
        assert information_gain([0, 0, 0, 1, 1], [0, 0], [0, 1, 1], "gini") == pytest.approx(expected, rel=1e-14)

    def test_partition_mismatch(self):
        with pytest.raises(ValueError, match="partition"):
            information_gain([0, 0, 1], [0], [1, 1], "gini")


class TestBestThreshold:
    def test_perfect_separation(self):
        hp = Hyperparams(min_samples_leaf=1, min_samples_split=2, impurity="entropy")
        cand = best_threshold_for_pivot([1, 2, 3, 4], [0, 0, 1, 1], hp)
        assert cand.threshold == 2.5
        assert cand.gain == 1.0
        assert (cand.left_count, cand.right_count) == (2, 2)

    def test_constant_column_has_no_split(self):
        assert best_threshold_for_pivot([2.0] * 6, [0, 1, 0, 1, 0, 1]) is None

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="length"):
            best_threshold_for_pivot([1, 2, 3], [0, 1])

    def test_respects_min_leaf(self):
        hp = Hyperparams(min_samples_leaf=3, min_samples_split=2)
        cand = best_threshold_for_pivot([1, 2, 3, 4, 5, 6], [0, 1, 1, 1, 1, 1], hp)
        assert cand.left_count >= 3 and cand.right_count >= 3

    @pytest.mark.parametrize("seed", range(20))
    @pytest.mark.parametrize("kind", ["gini", "entropy"])
    def test_matches_exhaustive_midpoints(self, seed, kind):
        rng = np.random.default_rng(seed)
        d = rng.random(8).round(1)
        y = rng.integers(0, 2, 8)
        hp = Hyperparams(min_samples_leaf=2, min_samples_split=2, impurity=kind)
        got = best_threshold_for_pivot(d, y, hp)
        expected = exhaustive_column_split(d.tolist(), y.tolist(), 2, kind)
        if expected is None:
            assert got is None
        else:
            assert (got.gain, got.threshold) == expected


class TestRepresentative:
    def test_collinear_middle(self):
        X = np.array([[0.0], [1.0], [2.0]])
        [rec] = select_representative_pivots(X, [0, 0, 0], source_indices=[10, 11, 12])
        assert rec.source_index == 11
        assert rec.roles == {Role.REPRESENTATIVE}

    def test_singleton_class(self):
        recs = select_representative_pivots(np.array([[0.0], [1.0], [5.0]]), [0, 0, 1])
        assert [r.source_index for r in recs if r.label == 1] == [2]

    def test_tie_goes_to_lowest_index(self):
        [rec] = select_representative_pivots(np.array([[0.0], [1.0]]), [0, 0], source_indices=[4, 9])
        assert rec.source_index == 4

    @pytest.mark.parametrize("seed", range(10))
    def test_matches_brute_force_medoid(self, seed):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(10, 3))
        y = np.repeat([0, 1], 5)
        recs = select_representative_pivots(X, y)
        D = nested_loop_pairwise(X)
        for rec in recs:
            members = [i for i in range(10) if y[i] == rec.label]
            assert rec.source_index == medoid_position(D, members)


class TestDiscriminative:
    def test_single_class_node_is_empty(self):
        assert select_discriminative_pivots(np.zeros((6, 2)) + np.arange(6)[:, None], [1] * 6) == []

    def test_separable_line_reaches_parent_impurity(self):
        X = np.array([[0.0], [1.0], [2.0], [7.0], [8.0], [9.0]])
        y = np.array([0, 0, 0, 1, 1, 1])
        hp = Hyperparams(min_samples_leaf=1, min_samples_split=2)
        pairs = select_discriminative_pivots(X, y, hyperparams=hp)
        assert {r.label for r, _ in pairs} == {0, 1}
        D = nested_loop_pairwise(X)
        for rec, split in pairs:
            assert split.gain == impurity(y)
            members = [i for i in range(6) if y[i] == rec.label]
            best = exhaustive_node_split(D, y.tolist(), list(range(6)), members, 1, "gini")
            assert (split.gain, rec.source_index) == best[:2]

    def test_equal_gain_prefers_lower_source_index(self):
        X = np.array([[0.0], [1.0], [10.0], [11.0]])
        hp = Hyperparams(min_samples_leaf=1, min_samples_split=2)
        pairs = select_discriminative_pivots(X, [0, 0, 1, 1], source_indices=[5, 2, 8, 9], hyperparams=hp)
        by_label = {r.label: r.source_index for r, _ in pairs}
        assert by_label == {0: 2, 1: 8}


class TestFit:
    def test_single_class_gives_leaf(self):
        model = fit(LabeledDataset(np.random.default_rng(0).normal(size=(10, 2)), [1] * 10))
        assert model.root.is_leaf
        assert extract_pivots(model, "splitting") == []
        assert predict(model, [100.0, -3.0]) == 1

    def test_single_instance(self):
        model = fit(LabeledDataset([[1.0, 2.0]], [0]))
        assert model.root.is_leaf and model.all_pivots == []

    def test_blobs_fit_perfectly(self, blobs8):
        model = fit(blobs8, Hyperparams(max_depth=2))
        assert np.array_equal(predict_batch(model, blobs8.X), blobs8.y)
        assert len(extract_pivots(model, "splitting")) <= 3
        assert model.depth <= 2

    @pytest.mark.parametrize("depth", [1, 2, 3, 4])
    def test_structural_invariants(self, three_class, depth):
        hp = Hyperparams(max_depth=depth)
        model = fit(three_class, hp)
        assert model.depth <= depth
        for node in iter_nodes(model.root):
            if node.is_leaf:
                assert sum(node.class_counts) >= hp.min_samples_leaf
                assert node.predicted_class == int(np.argmax(node.class_counts))
            else:
                summed = np.add(node.left.class_counts, node.right.class_counts)
                assert tuple(summed) == node.class_counts
        for p in model.all_pivots:
            assert np.array_equal(p.vector, three_class.X[p.source_index])
            assert p.label == three_class.y[p.source_index]
            assert p.roles

    def test_nodes_take_the_exhaustive_best_split(self, three_class):
        # replay training data through the tree and re-derive each node's split
        hp = Hyperparams(max_depth=3, min_samples_leaf=2, min_samples_split=4)
        small = three_class.subset(np.arange(0, 60, 5))
        model = fit(small, hp)
        stack = [(model.root, np.arange(small.n))]
        while stack:
            node, idx = stack.pop()
            if node.is_leaf:
                continue
            D = nested_loop_pairwise(small.X[idx])
            best = exhaustive_node_split(D, small.y[idx].tolist(), idx, range(idx.size), 2, "gini")
            assert best[1] == node.pivot.source_index
            assert node.threshold == pytest.approx(best[2], rel=1e-12)
            d = np.array([D[i][list(idx).index(node.pivot.source_index)] for i in range(idx.size)])
            stack.append((node.left, idx[d <= node.threshold]))
            stack.append((node.right, idx[d > node.threshold]))

    def test_deterministic(self, three_class):
        assert dumps_model(fit(three_class)) == dumps_model(fit(three_class))

    def test_representative_only_candidates(self, three_class):
        model = fit(three_class, Hyperparams(candidate_types={"representative"}))
        for p in model.all_pivots:
            assert Role.DISCRIMINATIVE not in p.roles
        assert extract_pivots(model, "splitting")

    def test_candidate_cap_at_class_size_changes_nothing(self, three_class):
        a = fit(three_class, Hyperparams(max_depth=3))
        b = fit(three_class, Hyperparams(max_depth=3, max_candidates_per_class=20))
        assert dumps_model(a).replace('"max_candidates_per_class": 20', '"max_candidates_per_class": null') \
            == dumps_model(b).replace('"max_candidates_per_class": 20', '"max_candidates_per_class": null')

    def test_candidate_cap_limits_search(self, three_class):
        model = fit(three_class, Hyperparams(max_depth=3, max_candidates_per_class=2))
        assert np.mean(predict_batch(model, three_class.X) == three_class.y) > 0.8

    def test_entropy_criterion(self, three_class):
        model = fit(three_class, Hyperparams(impurity="entropy"))
        assert np.mean(predict_batch(model, three_class.X) == three_class.y) > 0.9

    def test_rejects_non_dataset(self):
        with pytest.raises(TypeError):
            fit(np.zeros((3, 2)))

    @pytest.mark.parametrize("kwargs", [
        {"max_depth": 0}, {"min_samples_leaf": 0}, {"min_samples_split": 1},
        {"impurity": "mse"}, {"candidate_types": set()}, {"candidate_types": {"used_in_split"}},
    ])
    def test_hyperparam_validation(self, kwargs):
        with pytest.raises(ValueError):
            Hyperparams(**kwargs)


class TestPredictAndExplain:
    def test_leaf_only_predicts_majority(self):
        model = fit(LabeledDataset([[0.0], [1.0], [2.0]], [1, 1, 0]), Hyperparams(max_depth=1))
        assert model.root.is_leaf
        assert predict(model, [50.0]) == 1
        assert decision_path(model, [50.0]) == []

    def test_split_pivot_routes_left(self, three_class):
        model = fit(three_class)
        root_pivot = model.root.pivot
        path = decision_path(model, root_pivot.vector)
        assert path[0].relation == "<=" and path[0].distance == 0.0
        assert path[0].pivot_id == root_pivot.source_index

    def test_depth_one_path_has_one_step(self, blobs8):
        model = fit(blobs8, Hyperparams(max_depth=1))
        assert len(decision_path(model, [0.0, 0.0])) == 1

    def test_path_agrees_with_predict(self, three_class):
        model = fit(three_class, Hyperparams(max_depth=4))
        rng = np.random.default_rng(1)
        queries = rng.normal(scale=3, size=(200, 3))
        batch = predict_batch(model, queries)
        for x, expected in zip(queries, batch):
            assert leaf_for(model, x).predicted_class == predict(model, x) == expected
            for step in decision_path(model, x):
                assert (step.distance <= step.threshold) == (step.relation == "<=")

    def test_dimension_mismatch(self, blobs8):
        model = fit(blobs8)
        with pytest.raises(ValueError, match="dimension"):
            predict(model, [1.0, 2.0, 3.0])
        with pytest.raises(ValueError, match="dimension"):
            decision_path(model, [1.0])


class TestExtractPivots:
    def test_filters(self, three_class):
        model = fit(three_class, Hyperparams(max_depth=4))
        splitting = extract_pivots(model, "splitting")
        everything = extract_pivots(model, ["representative", "discriminative", "used_in_split"])
        assert len(splitting) <= 2 ** 4 - 1
        ids = {p.source_index for p in everything}
        for combo in ("representative", "discriminative", "both", "splitting"):
            assert {p.source_index for p in extract_pivots(model, combo)} <= ids
        for p in splitting:
            assert p.roles & {Role.REPRESENTATIVE, Role.DISCRIMINATIVE}
        assert [p.source_index for p in everything] == sorted(ids)

    def test_empty_filter(self, blobs8):
        with pytest.raises(ValueError):
            extract_pivots(fit(blobs8), [])


class TestExportDot:
    def test_leaf_only(self):
        model = fit(LabeledDataset([[0.0], [1.0]], [0, 0]))
        graph = pydot.graph_from_dot_data(export_dot(model))[0]
        assert len(graph.get_nodes()) == 1 + _pydot_defaults(graph)
        assert graph.get_edges() == []

    def test_depth_one(self, blobs8):
        model = fit(blobs8, Hyperparams(max_depth=1))
        graph = pydot.graph_from_dot_data(export_dot(model))[0]
        assert len(graph.get_nodes()) - _pydot_defaults(graph) == 3
        edges = graph.get_edges()
        assert len(edges) == 2
        labels = sorted(e.get_label().strip('"') for e in edges)
        assert labels[0].startswith(">") and labels[1].startswith("≤")

    def test_deeper_tree_parses(self, three_class):
        model = fit(three_class, Hyperparams(max_depth=4))
        graph = pydot.graph_from_dot_data(export_dot(model))[0]
        n_nodes = sum(1 for _ in iter_nodes(model.root))
        assert len(graph.get_nodes()) - _pydot_defaults(graph) == n_nodes
        assert len(graph.get_edges()) == n_nodes - 1


def _pydot_defaults(graph):
    # the "node [..]" default-attribute statement shows up as a pseudo-node
    return sum(1 for n in graph.get_nodes() if n.get_name() in ("node", "edge", "graph"))


def test_node_candidates_records_roles(three_class):
    idx = np.arange(three_class.n)
    best, candidates, _ = node_candidates(three_class.X, three_class.y, idx, Hyperparams(), 3)
    roles = set().union(*(r.roles for r, _ in candidates.values()))
    assert roles == {Role.REPRESENTATIVE, Role.DISCRIMINATIVE}
    assert best.pivot_source_index in candidates
    assert all(s is None or s.gain <= best.gain for _, s in candidates.values())
