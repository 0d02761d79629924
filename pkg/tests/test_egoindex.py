import itertools

import numpy as np
import pytest

from conftest import make_graph, random_graph
from dynagrag.consolidation import pair_key
from dynagrag.egoindex import (
    EgoIndex,
    build_ego,
    build_index,
    encode_ego,
    weighted_edge_feature,
    weighted_node_feature,
)
from dynagrag.errors import InputError


def path_graph():
    return make_graph(
        nodes=[("A", [1.0, 0.0], 1), ("B", [0.0, 1.0], 1), ("C", [1.0, 1.0], 2)],
        edges=[("A", "B", [0.5, 0.5], 1), ("B", "C", [0.2, 0.8], 1)],
    )


def shortest_paths(graph):
    """Brute-force BFS distances for the k-ball oracle."""
    dist = {}
    for src in graph.entities:
        d = {src: 0}
        frontier = [src]
        while frontier:
            nxt = []
            for u in frontier:
                for v in graph.neighbors(u):
                    if v not in d:
                        d[v] = d[u] + 1
                        nxt.append(v)
            frontier = nxt
        dist[src] = d
    return dist


class TestBuildEgo:
    def test_k0(self):
        ego = build_ego(path_graph(), "A", 0)
        assert ego.node_labels == {"A"}
        assert ego.edge_pairs == set()

    def test_k1_path(self):
        ego = build_ego(path_graph(), "A", 1)
        assert ego.node_labels == {"A", "B"}
        assert ego.edge_pairs == {("A", "B")}

    def test_k3_reaches_all(self):
        ego = build_ego(path_graph(), "A", 3)
        assert ego.node_labels == {"A", "B", "C"}
        assert ego.edge_pairs == {("A", "B"), ("B", "C")}

    def test_unknown_center(self):
        with pytest.raises(InputError):
            build_ego(path_graph(), "Z", 1)

    def test_kball_matches_shortest_path_oracle(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            graph = random_graph(rng, max_nodes=15, dim=4)
            dist = shortest_paths(graph)
            for center in graph.entities:
                for k in (0, 1, 2, 3):
                    ego = build_ego(graph, center, k)
                    expected = {v for v, d in dist[center].items() if d <= k}
                    assert ego.node_labels == expected
                    for a, b in ego.edge_pairs:
                        assert a in expected and b in expected
                    induced = {
                        pair for pair in graph.relations
                        if pair[0] in expected and pair[1] in expected
                    }
                    assert ego.edge_pairs == induced


class TestFeatures:
    def test_node_identity_weight(self):
        graph = path_graph()
        assert np.array_equal(
            weighted_node_feature(graph.entities["A"]), [1.0, 0.0])

    def test_node_scaling(self, mock_gateway):
        from conftest import make_entity
        e = make_entity("x", [1.0, 2.0], weight=3)
        assert np.array_equal(weighted_node_feature(e), [3.0, 6.0])

    def test_node_zero_vector(self):
        from conftest import make_entity
        e = make_entity("x", [0.0, 0.0], weight=7)
        assert np.array_equal(weighted_node_feature(e), [0.0, 0.0])

    def test_edge_formula(self):
        from conftest import make_entity
        from dynagrag.consolidation import Relation
        src = make_entity("a", [1.0, 0.0])
        tgt = make_entity("b", [0.0, 1.0])
        r = Relation(("a", "b"), np.array([1.0, 1.0]), 2, [])
        feat = weighted_edge_feature(src, tgt, r)
        assert np.allclose(feat, [4 / 3, 4 / 3])

    def test_edge_symmetry(self):
        from conftest import make_entity
        from dynagrag.consolidation import Relation
        rng = np.random.default_rng(1)
        src = make_entity("a", rng.standard_normal(5))
        tgt = make_entity("b", rng.standard_normal(5))
        r = Relation(("a", "b"), rng.standard_normal(5), 3, [])
        assert np.array_equal(weighted_edge_feature(src, tgt, r),
                              weighted_edge_feature(tgt, src, r))

    def test_edge_zero_embeddings(self):
        from conftest import make_entity
        from dynagrag.consolidation import Relation
        src = make_entity("a", [0.0, 0.0])
        tgt = make_entity("b", [0.0, 0.0])
        r = Relation(("a", "b"), np.array([0.0, 0.0]), 9, [])
        assert np.array_equal(weighted_edge_feature(src, tgt, r), [0.0, 0.0])


def brute_force_encode(graph, ego):
    """Independent evaluation of the total-graph-embedding formula."""
    feats = []
    w_total = 0.0
    for label in ego.node_labels:
        e = graph.entities[label]
        feats.append(e.embedding * e.weight)
        w_total += e.weight
    for a, b in ego.edge_pairs:
        r = graph.relations[pair_key(a, b)]
        ha = graph.entities[a].embedding
        hb = graph.entities[b].embedding
        feats.append((ha + hb + r.embedding) / 3.0 * r.weight)
        w_total += r.weight
    return sum(feats) / w_total, w_total


class TestEncodeEgo:
    def test_single_node(self):
        graph = make_graph([("A", [1.0, 0.0], 2)], [])
        encoded = encode_ego(graph, build_ego(graph, "A", 0))
        assert np.allclose(encoded.embedding, [1.0, 0.0])
        assert encoded.total_weight == 2

    def test_two_node_hand_value(self):
        graph = make_graph(
            nodes=[("A", [1.0, 0.0], 1), ("B", [0.0, 1.0], 1)],
            edges=[("A", "B", [1.0, 1.0], 2)],
        )
        encoded = encode_ego(graph, build_ego(graph, "A", 1))
        assert np.allclose(encoded.embedding, [7 / 12, 7 / 12])
        assert encoded.total_weight == 4

    def test_identical_embeddings_weight_invariant(self):
        v = np.array([0.3, -0.7])
        graph = make_graph(
            nodes=[("A", v, 5), ("B", v, 2)],
            edges=[("A", "B", v, 3)],
        )
        encoded = encode_ego(graph, build_ego(graph, "A", 1))
        assert np.allclose(encoded.embedding, v)

    def test_top_nodes_order(self):
        graph = make_graph(
            nodes=[("A", [1.0, 0.0], 1), ("B", [0.0, 1.0], 3), ("C", [1.0, 1.0], 3)],
            edges=[("A", "B", [0.1, 0.1], 1), ("A", "C", [0.1, 0.1], 1)],
        )
        encoded = encode_ego(graph, build_ego(graph, "A", 1), m=2)
        assert encoded.top_nodes == ["B", "C"]


class TestIndex:
    def test_sizes(self):
        assert len(build_index(make_graph([("A", [1.0], 1)], []), 3, 3).entries) == 1
        assert len(build_index(path_graph(), 3, 3).entries) == 3

    def test_entries_match_brute_force(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            graph = random_graph(rng, max_nodes=12, dim=6)
            index = build_index(graph, k=2, m=3)
            assert len(index.entries) == graph.node_count
            for entry in index.entries:
                g, w = brute_force_encode(graph, entry.ego)
                assert np.allclose(entry.embedding, g, rtol=1e-9, atol=1e-12)
                assert abs(entry.total_weight - w) < 1e-9

    def test_rebuild_determinism(self):
        rng = np.random.default_rng(9)
        graph = random_graph(rng, max_nodes=20, dim=8)
        i1 = build_index(graph, 2, 3)
        i2 = build_index(graph, 2, 3)
        for a, b in zip(i1.entries, i2.entries):
            assert np.max(np.abs(a.embedding - b.embedding)) < 1e-12

    def test_summation_order_robustness(self):
        rng = np.random.default_rng(13)
        graph = random_graph(rng, max_nodes=20, dim=8, connected=True)
        index = build_index(graph, 3, 3)
        for entry in index.entries:
            # independent summation order: reversed sorted element list
            feats = []
            for label in sorted(entry.ego.node_labels, reverse=True):
                e = graph.entities[label]
                feats.append(e.embedding * e.weight)
            for a, b in sorted(entry.ego.edge_pairs, reverse=True):
                r = graph.relations[pair_key(a, b)]
                feats.append((graph.entities[a].embedding
                              + graph.entities[b].embedding
                              + r.embedding) / 3.0 * r.weight)
            alt = sum(feats) / entry.total_weight
            assert np.max(np.abs(alt - entry.embedding)) < 1e-9

    def test_save_load_roundtrip(self, tmp_path):
        rng = np.random.default_rng(21)
        graph = random_graph(rng, max_nodes=10, dim=4, connected=True)
        index = build_index(graph, 2, 3)
        path = tmp_path / "index.bin"
        index.save(path)
        loaded = EgoIndex.load(path, graph=graph)
        assert loaded.dimension == index.dimension
        assert len(loaded.entries) == len(index.entries)
        for a, b in zip(index.entries, loaded.entries):
            assert a.ego.center == b.ego.center
            assert a.ego.node_labels == b.ego.node_labels
            assert a.ego.edge_pairs == b.ego.edge_pairs
            assert a.top_nodes == b.top_nodes
            assert np.allclose(a.embedding, b.embedding, atol=1e-6)  # f32 storage

    def test_refresh_localized(self):
        # path A-B-C-D-E, k=1: changing E must re-encode only D and E
        labels = ["A", "B", "C", "D", "E"]
        nodes = [(l, [float(i), 1.0], 1) for i, l in enumerate(labels)]
        edges = [(a, b, [0.5, 0.5], 1) for a, b in zip(labels, labels[1:])]
        graph = make_graph(nodes, edges)
        index = build_index(graph, k=1, m=3)
        graph.entities["E"].weight = 4
        count = index.refresh(graph, {"E"})
        assert count == 2
        fresh = build_index(graph, k=1, m=3)
        for a, b in zip(index.entries, fresh.entries):
            assert np.max(np.abs(a.embedding - b.embedding)) < 1e-9
