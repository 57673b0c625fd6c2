"""Per-bag structures: threshold graphs, edge features, affinity weights."""

import io

import numpy as np
import pytest

from migk import (
    AFFINITY_RBF,
    AFFINITY_SQEUCLID,
    Bag,
    BagGraph,
    ValidationError,
    affinity_from_sq_dists,
    affinity_weights_from_matrix,
    build_affinity,
    build_epsilon_graph,
    dump_edges,
    edge_features,
    epsilon_graph_from_dists,
    mean_pairwise,
)

import oracles


def dist_matrix(d12, d13, d23):
    return np.array(
        [
            [0.0, d12, d13],
            [d12, 0.0, d23],
            [d13, d23, 0.0],
        ]
    )


def edge_set(graph):
    return {(int(u), int(v)): w for (u, v), w in zip(graph.edges, graph.weights)}


class TestEpsilonGraph:
    def test_three_instance_reciprocal_weights(self):
        graph = epsilon_graph_from_dists("g", dist_matrix(0.1, 0.2, 0.9), 1.0)
        assert graph.epsilon == pytest.approx(0.4, rel=1e-12)
        got = edge_set(graph)
        assert set(got) == {(0, 1), (0, 2)}
        assert got[(0, 1)] == pytest.approx(1.0, rel=1e-12)
        assert got[(0, 2)] == pytest.approx(0.5, rel=1e-12)

    def test_single_edge_normalizes_to_one(self):
        bag = Bag("b", np.array([[0.0], [0.3]]), 1.0)
        graph = build_epsilon_graph(bag, epsilon_factor=2.0)
        assert graph.m_edges == 1
        assert graph.weights[0] == 1.0

    def test_all_distances_at_threshold_yield_no_edges(self):
        bag = Bag("b", np.array([[0.0], [0.3]]), 1.0)
        graph = build_epsilon_graph(bag, epsilon_factor=1.0)
        assert graph.m_edges == 0
        assert graph.epsilon == pytest.approx(0.3)

    def test_single_instance_bag_has_no_edges(self):
        graph = build_epsilon_graph(Bag("b", np.array([[1.0, 2.0]]), 1.0))
        assert graph.n_nodes == 1 and graph.m_edges == 0

    def test_duplicate_instances_get_max_raw_weight(self):
        # distances: d12=0 (duplicates), d13=d23=1; mean=2/3, so only the
        # zero-distance pair is below threshold and self-normalizes to 1
        graph = epsilon_graph_from_dists("g", dist_matrix(0.0, 1.0, 1.0), 1.0)
        got = edge_set(graph)
        assert set(got) == {(0, 1)}
        assert got[(0, 1)] == 1.0

    def test_duplicate_pair_alongside_finite_edges(self):
        # d12=0, d13=0.5, d23=2.5: mean=1, edges {12, 13}; raw weights are
        # {max_raw, 2} with max_raw=2, so both normalize to 1.0
        graph = epsilon_graph_from_dists("g", dist_matrix(0.0, 0.5, 2.5), 1.0)
        got = edge_set(graph)
        assert got[(0, 1)] == pytest.approx(1.0)
        assert got[(0, 2)] == pytest.approx(1.0)

    def test_matches_loop_oracle_on_random_points(self, rng):
        for _ in range(10):
            points = rng.normal(size=(int(rng.integers(2, 7)), 3))
            bag = Bag("b", points, 1.0)
            graph = build_epsilon_graph(bag, epsilon_factor=1.0)
            edges, weights = oracles.epsilon_graph([list(p) for p in points], 1.0)
            got = edge_set(graph)
            assert set(got) == set(edges)
            for e, w in zip(edges, weights):
                assert got[e] == pytest.approx(w, rel=1e-10)

    def test_weights_in_unit_interval(self, rng):
        for _ in range(20):
            points = rng.normal(size=(5, 2))
            graph = build_epsilon_graph(Bag("b", points, 1.0), epsilon_factor=1.5)
            if graph.m_edges:
                assert graph.weights.min() > 0.0
                assert graph.weights.max() == pytest.approx(1.0)

    def test_reordering_invariance(self, rng):
        points = rng.normal(size=(6, 3))
        perm = rng.permutation(6)
        g1 = build_epsilon_graph(Bag("b", points, 1.0))
        g2 = build_epsilon_graph(Bag("b", points[perm], 1.0))
        relabeled = {}
        for (u, v), w in zip(g2.edges, g2.weights):
            a, b = sorted((int(perm[u]), int(perm[v])))
            relabeled[(a, b)] = w
        original = edge_set(g1)
        assert set(relabeled) == set(original)
        for e, w in original.items():
            assert relabeled[e] == pytest.approx(w, rel=1e-10)

    def test_bad_factor_rejected(self):
        with pytest.raises(ValidationError):
            epsilon_graph_from_dists("g", dist_matrix(1, 1, 1), 0.0)

    def test_non_square_rejected(self):
        with pytest.raises(ValidationError):
            epsilon_graph_from_dists("g", np.zeros((2, 3)), 1.0)

    def test_mean_pairwise_distinct_pairs_only(self):
        assert mean_pairwise(dist_matrix(1.0, 2.0, 3.0)) == pytest.approx(2.0)
        assert mean_pairwise(np.zeros((1, 1))) == 0.0


class TestEdgeFeatures:
    def test_single_edge_is_all_ones(self):
        bag = Bag("b", np.array([[0.0], [0.3]]), 1.0)
        graph = build_epsilon_graph(bag, epsilon_factor=2.0)
        np.testing.assert_allclose(edge_features(graph), [[1.0, 1.0, 1.0, 1.0]])

    def test_path_features(self):
        # nodes a-b-c in a path with equal edge weights; for edge (a, b):
        # d_a = 1/2, p_a = 1, d_b = 1, p_b = 1/2
        graph = BagGraph("p", 3, 1.0, np.array([[0, 1], [1, 2]]), np.array([1.0, 1.0]))
        feats = edge_features(graph)
        np.testing.assert_allclose(feats[0], [0.5, 1.0, 1.0, 0.5])
        np.testing.assert_allclose(feats[1], [1.0, 0.5, 0.5, 1.0])

    def test_triangle_features(self):
        graph = BagGraph(
            "t", 3, 1.0, np.array([[0, 1], [0, 2], [1, 2]]), np.array([1.0, 1.0, 1.0])
        )
        feats = edge_features(graph)
        for row in feats:
            np.testing.assert_allclose(row, [2 / 3, 0.5, 2 / 3, 0.5])

    def test_zero_edge_graph_yields_empty(self):
        graph = build_epsilon_graph(Bag("b", np.array([[0.0]]), 1.0))
        assert edge_features(graph).shape == (0, 4)

    def test_incident_share_sums_to_one(self, rng):
        for _ in range(15):
            points = rng.normal(size=(int(rng.integers(3, 8)), 3))
            graph = build_epsilon_graph(Bag("b", points, 1.0), epsilon_factor=1.3)
            if graph.m_edges == 0:
                continue
            feats = edge_features(graph)
            share = np.zeros(graph.n_nodes)
            np.add.at(share, graph.edges[:, 0], feats[:, 1])
            np.add.at(share, graph.edges[:, 1], feats[:, 3])
            touched = graph.degrees() > 0
            np.testing.assert_allclose(share[touched], 1.0, atol=1e-12)

    def test_matches_loop_oracle(self, rng):
        points = rng.normal(size=(6, 2))
        graph = build_epsilon_graph(Bag("b", points, 1.0), epsilon_factor=1.4)
        feats = edge_features(graph)
        rows = oracles.edge_feature_rows(
            graph.n_nodes, [tuple(e) for e in graph.edges], list(graph.weights)
        )
        np.testing.assert_allclose(feats, rows, rtol=1e-12)

    def test_values_in_unit_interval(self, rng):
        points = rng.normal(size=(7, 2))
        graph = build_epsilon_graph(Bag("b", points, 1.0), epsilon_factor=1.4)
        feats = edge_features(graph)
        if feats.size:
            assert feats.min() > 0.0 and feats.max() <= 1.0


class TestAffinity:
    def test_single_instance(self):
        s = build_affinity(Bag("b", np.array([[2.0, 3.0]]), 1.0), gamma=1.0)
        np.testing.assert_allclose(s.matrix, [[1.0]])
        np.testing.assert_allclose(s.weights, [1.0])
        assert s.delta == 0.0

    def test_two_instances_strict_threshold_gives_identity(self):
        s = build_affinity(Bag("b", np.array([[0.0], [1.0]]), 1.0), gamma=1.0)
        np.testing.assert_allclose(s.matrix, np.eye(2))
        np.testing.assert_allclose(s.weights, [1.0, 1.0])

    def test_three_instance_hand_example(self):
        # squared-euclidean mode on points 0, 1, 2 gives squared distances
        # {1, 1, 4}: delta = 2, the two distance-1 pairs connect, row sums
        # {3, 2, 2} -> weights {1/3, 1/2, 1/2} with instance 0 the shared hub
        bag = Bag("b", np.array([[0.0], [1.0], [-1.0]]), 1.0)
        s = build_affinity(bag, gamma=1.0, mode=AFFINITY_SQEUCLID)
        assert s.delta == pytest.approx(2.0)
        np.testing.assert_allclose(
            s.matrix, [[1, 1, 1], [1, 1, 0], [1, 0, 1]], atol=0
        )
        np.testing.assert_allclose(s.weights, [1 / 3, 1 / 2, 1 / 2])

    def test_rbf_induced_matches_loop_oracle(self, rng):
        for _ in range(10):
            points = rng.normal(size=(int(rng.integers(2, 7)), 3))
            s = build_affinity(Bag("b", points, 1.0), gamma=0.7, mode=AFFINITY_RBF)
            w, delta = oracles.affinity_matrix([list(p) for p in points], 0.7, "rbf-induced")
            np.testing.assert_allclose(s.matrix, w, atol=0)
            assert s.delta == pytest.approx(delta, rel=1e-12)
            np.testing.assert_allclose(s.weights, oracles.affinity_weights(w), rtol=1e-12)

    def test_gamma_cancels_in_squared_mode(self, rng):
        points = rng.normal(size=(5, 2))
        a = build_affinity(Bag("b", points, 1.0), gamma=0.1, mode=AFFINITY_SQEUCLID)
        b = build_affinity(Bag("b", points, 1.0), gamma=10.0, mode=AFFINITY_SQEUCLID)
        np.testing.assert_allclose(a.matrix, b.matrix, atol=0)

    def test_bad_mode_and_gamma_rejected(self):
        with pytest.raises(ValidationError):
            affinity_from_sq_dists("b", np.zeros((2, 2)), 1.0, "other")
        with pytest.raises(ValidationError):
            affinity_from_sq_dists("b", np.zeros((2, 2)), -1.0, AFFINITY_RBF)

    def test_matrix_symmetric_unit_diagonal(self, rng):
        points = rng.normal(size=(6, 3))
        s = build_affinity(Bag("b", points, 1.0), gamma=1.0)
        np.testing.assert_allclose(s.matrix, s.matrix.T, atol=0)
        np.testing.assert_allclose(np.diag(s.matrix), 1.0, atol=0)
        assert set(np.unique(s.matrix)).issubset({0.0, 1.0})


class TestCliquePrinciples:
    def test_identity_matrix_gives_unit_weights(self):
        np.testing.assert_allclose(affinity_weights_from_matrix(np.eye(5)), np.ones(5))

    def test_all_ones_gives_equal_shares(self):
        np.testing.assert_allclose(affinity_weights_from_matrix(np.ones((4, 4))), 0.25)

    def test_block_diagonal_gives_clique_reciprocals(self):
        sizes = [3, 1, 2]
        blocks = [np.ones((s, s)) for s in sizes]
        w = affinity_weights_from_matrix(
            np.block(
                [
                    [blocks[0], np.zeros((3, 1)), np.zeros((3, 2))],
                    [np.zeros((1, 3)), blocks[1], np.zeros((1, 2))],
                    [np.zeros((2, 3)), np.zeros((2, 1)), blocks[2]],
                ]
            )
        )
        np.testing.assert_allclose(w, [1 / 3, 1 / 3, 1 / 3, 1.0, 0.5, 0.5])

    def test_adding_one_affinity_lowers_only_its_endpoints(self, rng):
        for _ in range(50):
            n = int(rng.integers(3, 8))
            mat = (rng.uniform(size=(n, n)) < 0.4).astype(float)
            mat = np.maximum(mat, mat.T)
            np.fill_diagonal(mat, 1.0)
            zeros = np.argwhere(np.triu(mat == 0.0, k=1))
            if not len(zeros):
                continue
            a, b = zeros[int(rng.integers(len(zeros)))]
            before = affinity_weights_from_matrix(mat)
            mat2 = mat.copy()
            mat2[a, b] = mat2[b, a] = 1.0
            after = affinity_weights_from_matrix(mat2)
            assert after[a] < before[a] and after[b] < before[b]
            others = [q for q in range(n) if q not in (a, b)]
            np.testing.assert_allclose(after[others], before[others], rtol=0, atol=0)

    def test_zero_row_rejected(self):
        with pytest.raises(ValidationError):
            affinity_weights_from_matrix(np.zeros((3, 3)))


class TestDump:
    def test_edge_list_lines(self):
        graph = epsilon_graph_from_dists("g", dist_matrix(0.1, 0.2, 0.9), 1.0)
        buf = io.StringIO()
        dump_edges(graph, buf)
        lines = buf.getvalue().strip().splitlines()
        assert len(lines) == graph.m_edges
        u, v, w = lines[0].split()
        assert (int(u), int(v)) == (0, 1)
        assert float(w) == pytest.approx(1.0)
