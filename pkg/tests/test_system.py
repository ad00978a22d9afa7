import json

import numpy as np
import pytest

from conftest import random_clustering, symmetric_flow_system
from netobs.clustering import characteristic_matrix, left_pseudo
from netobs.graph import Digraph, NodePartition
from netobs.numerics import hurwitz_margin
from netobs.system import (
    ClusteredNetworkSystem,
    check_assumptions,
    flow_system_from_graph,
    load_system,
    save_system,
    system_from_dict,
    system_to_dict,
    validate_metzler,
)


def two_by_two_system(a11, a12, a21, a22):
    return ClusteredNetworkSystem(
        A11=[[a11]], A12=[[a12]], A21=[[a21]], A22=[[a22]],
        B1=np.zeros((1, 0)), B2=np.zeros((1, 0)),
    )


class TestFlowAssembly:
    def test_hand_example(self):
        # Chain: node1 -> node0 (w=1), node2 -> node1 (w=1).
        g = Digraph(3, ((0, 1, 1.0), (1, 2, 1.0)))
        partition = NodePartition((0,), (1, 2))
        sys_ = flow_system_from_graph(g, partition, np.zeros((3, 1)))
        expected = np.array([[0.0, 1.0, 0.0], [0.0, -1.0, 1.0], [0.0, 0.0, -1.0]])
        assert np.allclose(sys_.full_state_matrix(), expected)

    def test_column_sums_zero(self):
        rng = np.random.default_rng(0)
        sys_ = symmetric_flow_system(rng, m=3, n=8)
        cols = sys_.full_state_matrix().sum(axis=0)
        assert np.abs(cols).max() <= 1e-12

    def test_empty_edge_set(self):
        g = Digraph(3, ())
        sys_ = flow_system_from_graph(g, NodePartition((0,), (1, 2)), np.zeros((3, 2)))
        assert np.all(sys_.full_state_matrix() == 0.0)

    def test_inconsistent_partition(self):
        g = Digraph(3, ())
        with pytest.raises(ValueError, match="partition inconsistent"):
            flow_system_from_graph(g, NodePartition((0,), (1,)), np.zeros((3, 1)))

    def test_reorder_invariance(self):
        # Relabeling the unmeasured list permutes the blocks accordingly.
        rng = np.random.default_rng(4)
        g = Digraph(6, tuple(
            (int(i), int(j), float(rng.uniform(0.2, 1.0)))
            for i in range(6) for j in range(6)
            if i != j and rng.random() < 0.4
        ))
        base = NodePartition((0, 1), (2, 3, 4, 5))
        shuffled = NodePartition((0, 1), (4, 2, 5, 3))
        b = rng.random((6, 2))
        sys_a = flow_system_from_graph(g, base, b)
        sys_b = flow_system_from_graph(g, shuffled, b)
        # Positions of shuffled order within base order.
        perm = [list(base.unmeasured).index(i) for i in shuffled.unmeasured]
        assert np.allclose(sys_b.A22, sys_a.A22[np.ix_(perm, perm)])
        assert np.allclose(sys_b.A12, sys_a.A12[:, perm])
        assert np.allclose(sys_b.A21, sys_a.A21[perm, :])
        assert np.allclose(sys_b.B2, sys_a.B2[perm, :])
        assert np.allclose(sys_b.A11, sys_a.A11)


class TestValidateMetzler:
    def test_accepts_metzler(self):
        assert validate_metzler(two_by_two_system(-1.0, 1.0, 0.0, -1.0))

    def test_rejects_negative_off_diagonal(self):
        assert not validate_metzler(two_by_two_system(-1.0, -0.1, 0.0, -1.0))

    def test_rejects_positive_diagonal(self):
        assert not validate_metzler(two_by_two_system(0.5, 1.0, 1.0, -1.0))


class TestCheckAssumptions:
    def test_tridiagonal_dominance(self, tridiag_sys):
        report = check_assumptions(tridiag_sys)
        assert report.a2_connected
        assert report.coupling_sums == (2.0, 4.0, 2.0)
        # Bounds 2|a_ii| = 4 everywhere: strict at the end nodes.
        assert report.a2_diagonal_dominance

    def test_equality_everywhere_fails_strictness(self):
        sys_ = ClusteredNetworkSystem(
            A11=[[-1.0]], A12=[[1.0, 0.0]], A21=np.zeros((2, 1)),
            A22=[[-1.0, 1.0], [1.0, -1.0]],
            B1=np.zeros((1, 0)), B2=np.zeros((2, 0)),
        )
        report = check_assumptions(sys_)
        assert report.coupling_sums == (2.0, 2.0)
        assert not report.a2_diagonal_dominance

    def test_disconnected_unmeasured(self):
        sys_ = ClusteredNetworkSystem(
            A11=[[-1.0]], A12=[[1.0, 1.0]], A21=np.zeros((2, 1)),
            A22=np.diag([-1.0, -1.0]),
            B1=np.zeros((1, 0)), B2=np.zeros((2, 0)),
        )
        assert not check_assumptions(sys_).a2_connected

    def test_rank_gate(self):
        sys_ = ClusteredNetworkSystem(
            A11=-np.eye(2), A12=[[1.0, 1.0], [1.0, 1.0]], A21=np.zeros((2, 2)),
            A22=-np.eye(2) + np.array([[0.0, 0.5], [0.5, 0.0]]),
            B1=np.zeros((2, 0)), B2=np.zeros((2, 0)),
        )
        assert not check_assumptions(sys_).a1_rank_ok

    @pytest.mark.parametrize("seed", range(10))
    def test_random_symmetric_systems_pass(self, seed):
        rng = np.random.default_rng(seed)
        assert check_assumptions(symmetric_flow_system(rng, m=2, n=7)).all_ok()


class TestAveragedBlockStability:
    @pytest.mark.parametrize("seed", range(200))
    def test_averaged_unmeasured_block_is_hurwitz(self, seed):
        # For systems passing all assumption checks, the cluster-averaged
        # unmeasured block has strictly negative spectral abscissa for every
        # clustering.
        rng = np.random.default_rng(20_000 + seed)
        m = int(rng.integers(1, 4))
        n = int(rng.integers(3, 9))
        sys_ = symmetric_flow_system(rng, m=m, n=n)
        k = int(rng.integers(1, n + 1))
        c = random_clustering(rng, n, k)
        q = characteristic_matrix(c)
        qp = left_pseudo(q)
        assert hurwitz_margin(qp @ sys_.A22 @ q) < 0.0


class TestSerialization:
    def test_round_trip_exact(self, tmp_path, tridiag_sys):
        path = tmp_path / "system.json"
        save_system(tridiag_sys, path, meta={"seed": 1})
        loaded = load_system(path)
        for name in ("A11", "A12", "A21", "A22", "B1", "B2"):
            assert np.array_equal(getattr(loaded, name), getattr(tridiag_sys, name))
        payload = json.loads(path.read_text())
        assert payload["meta"] == {"seed": 1}
        assert payload["m"] == 2 and payload["n"] == 3 and payload["p"] == 0

    def test_decimal_values_survive(self, tmp_path):
        sys_ = two_by_two_system(-0.1, 0.2, 0.3, -0.4)
        path = tmp_path / "sys.json"
        save_system(sys_, path)
        loaded = load_system(path)
        assert loaded.A11[0, 0] == -0.1
        assert loaded.A12[0, 0] == 0.2

    def test_dimension_header_mismatch(self):
        payload = system_to_dict(two_by_two_system(-1.0, 1.0, 1.0, -1.0))
        payload["n"] = 5
        with pytest.raises(ValueError, match="dimension header"):
            system_from_dict(payload)
