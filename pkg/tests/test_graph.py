import itertools

import numpy as np
import pytest

from netobs.graph import (
    Digraph,
    NodePartition,
    adjacency,
    erdos_renyi,
    is_weakly_connected,
    load_graph,
    max_bipartite_matching,
    neighbor_set_of_measured,
    save_graph,
    scale_free,
)
from netobs.numerics import numeric_rank


def brute_force_matching(pattern) -> int:
    """Oracle: largest set of edges with no shared row or column."""
    p = np.atleast_2d(np.asarray(pattern, dtype=bool))
    rows, cols = p.shape
    best = 0
    for size in range(min(rows, cols), 0, -1):
        for row_set in itertools.permutations(range(rows), size):
            for col_set in itertools.combinations(range(cols), size):
                if all(p[r, c] for r, c in zip(row_set, col_set)):
                    return size
    return best


def undirected_degrees(g: Digraph) -> np.ndarray:
    deg = np.zeros(g.node_count)
    for to, frm, _ in g.edges:
        if to < frm:  # symmetric digraph: count each undirected edge once
            deg[to] += 1
            deg[frm] += 1
    return deg


class TestDigraph:
    def test_rejects_self_loop(self):
        with pytest.raises(ValueError, match="self-loop"):
            Digraph(2, ((0, 0, 1.0),))

    def test_rejects_nonpositive_weight(self):
        with pytest.raises(ValueError, match="positive"):
            Digraph(2, ((0, 1, 0.0),))

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError, match="out of range"):
            Digraph(2, ((0, 5, 1.0),))

    def test_rejects_duplicate(self):
        with pytest.raises(ValueError, match="duplicate"):
            Digraph(3, ((0, 1, 1.0), (0, 1, 2.0)))

    def test_adjacency_convention(self):
        g = Digraph(3, ((0, 1, 2.5),))  # edge from node 1 into node 0
        a = adjacency(g)
        assert a[0, 1] == 2.5
        assert a.sum() == 2.5


class TestNodePartition:
    def test_rejects_overlap(self):
        with pytest.raises(ValueError, match="overlap"):
            NodePartition((0, 1), (1, 2))

    def test_rejects_empty(self):
        with pytest.raises(ValueError, match="nonempty"):
            NodePartition((), (0, 1))


class TestErdosRenyi:
    def test_no_edges(self):
        assert erdos_renyi(5, 0.0, 0.1, 1.0, seed=0).edge_count == 0

    def test_complete(self):
        assert erdos_renyi(4, 1.0, 0.1, 1.0, seed=0).edge_count == 12

    def test_deterministic(self):
        assert erdos_renyi(30, 0.2, 0.1, 1.0, seed=7).edges == erdos_renyi(30, 0.2, 0.1, 1.0, seed=7).edges

    def test_weights_in_range(self):
        g = erdos_renyi(20, 0.3, 0.25, 0.75, seed=3)
        weights = [w for _, _, w in g.edges]
        assert min(weights) >= 0.25 and max(weights) <= 0.75

    def test_mean_edge_count(self):
        # Binomial mean over ordered pairs: N(N-1)p = 1010*1009*0.05 = 50954.5
        total, p = 1010, 0.05
        expected = total * (total - 1) * p
        counts = [erdos_renyi(total, p, 0.1, 1.0, seed=s).edge_count for s in range(3)]
        assert abs(np.mean(counts) - expected) <= 0.05 * expected

    @pytest.mark.parametrize("seed", range(5))
    def test_empirical_probability_within_3_sigma(self, seed):
        total, p = 60, 0.15
        pairs = total * (total - 1)
        sigma = np.sqrt(pairs * p * (1 - p))
        count = erdos_renyi(total, p, 0.1, 1.0, seed=seed).edge_count
        assert abs(count - pairs * p) <= 3.0 * sigma

    def test_rejects_bad_weights(self):
        with pytest.raises(ValueError):
            erdos_renyi(5, 0.5, 0.0, 1.0, seed=0)
        with pytest.raises(ValueError):
            erdos_renyi(1, 0.5, 0.1, 1.0, seed=0)


class TestScaleFree:
    def test_exact_edge_count(self):
        g = scale_free(30, 1.0, 80, seed=0)
        assert g.edge_count == 160  # two directed edges per undirected one
        deg = undirected_degrees(g)
        assert deg.sum() == 2 * 80

    def test_symmetric(self):
        g = scale_free(25, 2.0, 60, seed=1)
        a = adjacency(g)
        assert np.array_equal(a, a.T)

    def test_infeasible_edge_count(self):
        with pytest.raises(ValueError, match="infeasible"):
            scale_free(5, 1.0, 11, seed=0)

    def test_uniform_bias_has_no_hubs(self):
        ratios = []
        for seed in range(20):
            deg = undirected_degrees(scale_free(100, 0.0, 300, seed=seed))
            ratios.append(deg.max() / deg.mean())
        assert max(ratios) <= 3.0

    def test_strong_bias_grows_hubs(self):
        heavy = 0
        for seed in range(20):
            deg = undirected_degrees(scale_free(105, 2.3, 700, seed=seed))
            if deg.max() > 5.0 * deg.mean():
                heavy += 1
        assert heavy >= 18  # >= 90% of seeds


class TestWeakConnectivity:
    def test_directed_path(self):
        g = Digraph(3, ((1, 0, 1.0), (2, 1, 1.0)))
        assert is_weakly_connected(g, [0, 1, 2])

    def test_isolated_pair(self):
        assert not is_weakly_connected(Digraph(2, ()), [0, 1])

    def test_empty_subset_rejected(self):
        with pytest.raises(ValueError):
            is_weakly_connected(Digraph(2, ()), [])

    @pytest.mark.parametrize("seed", range(20))
    def test_matches_laplacian_rank_oracle(self, seed):
        rng = np.random.default_rng(seed)
        total = 8
        mask = rng.random((total, total)) < 0.18
        np.fill_diagonal(mask, False)
        edges = tuple((int(i), int(j), 1.0) for i, j in zip(*np.nonzero(mask)))
        g = Digraph(total, edges)
        sym = mask | mask.T
        lap = np.diag(sym.sum(axis=1)) - sym.astype(float)
        oracle = numeric_rank(lap, 1e-9) == total - 1
        assert is_weakly_connected(g, range(total)) == oracle


class TestNeighborSet:
    def test_identity_columns(self):
        assert neighbor_set_of_measured([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]) == {0, 1}

    def test_all_zero(self):
        assert neighbor_set_of_measured(np.zeros((2, 3))) == set()

    def test_nonzero_columns(self):
        assert neighbor_set_of_measured([[0.0, 2.0, 0.0], [0.0, 1.0, 3.0]]) == {1, 2}

    def test_rejects_negative(self):
        with pytest.raises(ValueError, match="nonnegative"):
            neighbor_set_of_measured([[-1.0, 0.0]])


class TestMatching:
    def test_identity(self):
        assert max_bipartite_matching(np.eye(4, dtype=bool)) == 4

    def test_all_false(self):
        assert max_bipartite_matching(np.zeros((3, 3), dtype=bool)) == 0

    def test_small_case_against_oracle(self):
        pattern = [[True, True], [True, False]]
        assert brute_force_matching(pattern) == 2
        assert max_bipartite_matching(pattern) == 2

    @pytest.mark.parametrize("seed", range(25))
    def test_random_against_oracle(self, seed):
        rng = np.random.default_rng(seed)
        pattern = rng.random((4, 5)) < 0.35
        assert max_bipartite_matching(pattern) == brute_force_matching(pattern)

    def test_grank_consistency_with_numeric_rank(self):
        rng = np.random.default_rng(42)
        agree = 0
        trials = 1000
        for _ in range(trials):
            rows = int(rng.integers(2, 6))
            cols = int(rng.integers(2, 8))
            pattern = rng.random((rows, cols)) < 0.4
            values = np.where(pattern, rng.uniform(0.1, 1.0, size=(rows, cols)), 0.0)
            grank = max_bipartite_matching(pattern)
            nrank = numeric_rank(values, 1e-9)
            assert grank >= nrank
            agree += grank == nrank
        assert agree >= 0.99 * trials


def cluster_support_pattern(values, assignment, k):
    """Boolean cluster-to-measured adjacency: the aggregated coupling pattern."""
    values = np.asarray(values)
    labels = np.asarray(assignment)
    return np.stack([(values[:, labels == lab] != 0).any(axis=1) for lab in range(1, k + 1)], axis=1)


class TestStructuralRankEquivalence:
    @pytest.mark.parametrize("seed", range(60))
    def test_both_directions(self, seed):
        # For full-row-rank couplings, k <= m clusters, and clusters holding
        # two or more neighbor-set members each, full generic column rank of
        # the aggregated coupling holds exactly when every cluster touches
        # the neighbor set of the measured nodes.
        from conftest import generic_coupling_instance

        rng = np.random.default_rng(1000 + seed)
        values, c, nset, m, k = generic_coupling_instance(rng)
        labels = np.array(c.assignment)
        q = np.zeros((labels.size, k))
        q[np.arange(labels.size), labels - 1] = 1.0
        touches = all(any(int(i) in nset for i in np.nonzero(labels == lab)[0]) for lab in range(1, k + 1))
        grank = max_bipartite_matching((values @ q) != 0)
        assert (grank == k) == touches
        # The exact criterion: grank equals the largest matching of the
        # cluster-support pattern.
        assert grank == max_bipartite_matching(cluster_support_pattern(values, labels, k))

    @pytest.mark.parametrize("seed", range(40))
    def test_necessity_unconditional(self, seed):
        # Full aggregated rank forces every cluster to touch the neighbor
        # set; this direction needs no regularity at all.
        rng = np.random.default_rng(5000 + seed)
        m = int(rng.integers(2, 5))
        n = int(rng.integers(m + 1, 12))
        k = int(rng.integers(1, m + 1))
        values = np.where(rng.random((m, n)) < 0.4, rng.uniform(0.1, 1.0, (m, n)), 0.0)
        labels = np.empty(n, dtype=int)
        perm = rng.permutation(n)
        labels[perm[:k]] = np.arange(1, k + 1)
        labels[perm[k:]] = rng.integers(1, k + 1, size=n - k)
        q = np.zeros((n, k))
        q[np.arange(n), labels - 1] = 1.0
        if max_bipartite_matching((values @ q) != 0) == k:
            nset = neighbor_set_of_measured(values)
            assert all(any(int(i) in nset for i in np.nonzero(labels == lab)[0]) for lab in range(1, k + 1))

    def test_cluster_support_collision_limits_generic_rank(self):
        # Boundary case: two singleton clusters whose lone members each have
        # the same single measured neighbor. Both clusters intersect the
        # neighbor set, yet no value assignment can give the aggregated
        # coupling full column rank, because its two columns share one row.
        values = np.array([
            [0.9, 0.0, 0.0, 0.4],
            [0.0, 0.7, 0.5, 0.0],  # nodes 1 and 2 see only this sensor
        ])
        labels = np.array([1, 2, 3, 1])  # clusters {0,3}, {1}, {2}
        k = 3
        nset = neighbor_set_of_measured(values)
        assert all(any(int(i) in nset for i in np.nonzero(labels == lab)[0]) for lab in range(1, k + 1))
        q = np.zeros((4, k))
        q[np.arange(4), labels - 1] = 1.0
        assert max_bipartite_matching((values @ q) != 0) == 2  # < k
        assert numeric_rank(values @ q, 1e-9) == 2


class TestGraphIO:
    def test_round_trip(self, tmp_path):
        g = erdos_renyi(12, 0.3, 0.2, 0.9, seed=5)
        path = tmp_path / "graph.csv"
        save_graph(g, measured=[0, 1, 2], csv_path=path)
        loaded, partition = load_graph(path)
        assert loaded == g
        assert partition.measured == (0, 1, 2)
        assert partition.unmeasured == tuple(range(3, 12))

    def test_round_trip_bytes(self, tmp_path):
        g = erdos_renyi(10, 0.4, 0.1, 1.0, seed=9)
        first = tmp_path / "a.csv"
        second = tmp_path / "b.csv"
        save_graph(g, [0], first)
        loaded, _ = load_graph(first)
        save_graph(loaded, [0], second)
        assert first.read_bytes() == second.read_bytes()
