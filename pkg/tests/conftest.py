"""Shared builders for random test instances.

Systems built here are symmetric-weight flow networks, which satisfy the
structural assumptions by construction (symmetry gives the edge-weight
dominance, the unmeasured spanning tree gives connectivity); generic random
weights give the coupling block full row rank almost surely, with a retry
loop guarding the exceptional draws.
"""

import numpy as np
import pytest

from netobs.clustering import Clustering, stabilizability_rank_ok
from netobs.graph import Digraph, NodePartition
from netobs.system import ClusteredNetworkSystem, check_assumptions, flow_system_from_graph


def symmetric_flow_system(rng, m, n, p=0, extra_edges=None, max_tries=200):
    """Random flow system that passes all structural assumption checks."""
    if n < m:
        raise ValueError("full row rank of the coupling needs n >= m")
    total = m + n
    extra = extra_edges if extra_edges is not None else n
    for _ in range(max_tries):
        weights = {}

        def link(a, b):
            if a == b or (a, b) in weights:
                return
            w = float(rng.uniform(0.5, 1.5))
            weights[(a, b)] = w
            weights[(b, a)] = w

        for node in range(m + 1, total):
            link(node, int(rng.integers(m, node)))
        for sensor in range(m):
            for neighbor in rng.choice(np.arange(m, total), size=min(2, n), replace=False):
                link(sensor, int(neighbor))
        for _ in range(extra):
            a, b = (int(v) for v in rng.integers(0, total, size=2))
            link(a, b)

        g = Digraph(total, tuple((t, f, w) for (t, f), w in weights.items()))
        partition = NodePartition(tuple(range(m)), tuple(range(m, total)))
        b_mat = (rng.random((total, p)) < 0.5).astype(float) if p else np.zeros((total, 0))
        sys_ = flow_system_from_graph(g, partition, b_mat)
        if check_assumptions(sys_).all_ok():
            return sys_
    raise RuntimeError("could not build an assumption-satisfying random system")


def random_clustering(rng, n, k):
    """Random assignment with every label present."""
    labels = np.empty(n, dtype=int)
    perm = rng.permutation(n)
    labels[perm[:k]] = np.arange(1, k + 1)
    labels[perm[k:]] = rng.integers(1, k + 1, size=n - k)
    return Clustering(tuple(labels.tolist()), k)


def feasible_clustering(rng, a12, k, max_tries=200):
    """Random clustering whose aggregated coupling block has full column rank."""
    n = np.asarray(a12).shape[1]
    for _ in range(max_tries):
        c = random_clustering(rng, n, k)
        if stabilizability_rank_ok(a12, c):
            return c
    raise RuntimeError("could not find a rank-compatible clustering")


def generic_coupling_instance(rng):
    """Full-row-rank coupling with a clustering giving every cluster at least
    two neighbor-set members.

    This is the regime where the neighbor-intersection criterion reliably
    matches the generic rank of the aggregated coupling; singleton clusters
    can defeat it when distinct clusters share a single measured neighbor
    (see the cluster-support collision test in test_graph.py).

    Returns ``(values, clustering, nset, m, k)``.
    """
    from netobs.graph import max_bipartite_matching, neighbor_set_of_measured
    from netobs.numerics import numeric_rank

    m = int(rng.integers(3, 7))
    n = int(rng.integers(4 * m, 8 * m))
    k = int(rng.integers(2, m + 1))
    while True:
        pattern = rng.random((m, n)) < 0.35
        values = np.where(pattern, rng.uniform(0.1, 1.0, (m, n)), 0.0)
        if max_bipartite_matching(pattern) == m and numeric_rank(values, 1e-9) == m:
            break
    nset = sorted(neighbor_set_of_measured(values))
    for _ in range(500):
        c = random_clustering(rng, n, k)
        counts = np.bincount(np.array(c.assignment)[nset], minlength=k + 1)[1:]
        if (counts >= 2).all():
            return values, c, set(nset), m, k
    raise RuntimeError("could not place two neighbor-set members in every cluster")


def tridiagonal_instance():
    """Small hand-checkable system: two measured nodes coupled to a 3-node chain."""
    return ClusteredNetworkSystem(
        A11=[[-1.0, 0.0], [0.0, -1.0]],
        A12=[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
        A21=np.zeros((3, 2)),
        A22=[[-2.0, 1.0, 0.0], [1.0, -2.0, 1.0], [0.0, 1.0, -2.0]],
        B1=np.zeros((2, 0)),
        B2=np.zeros((3, 0)),
    )


@pytest.fixture
def tridiag_sys():
    return tridiagonal_instance()


@pytest.fixture
def cluster_13_2():
    """Clusters {node0, node2} and {node1} over three unmeasured nodes."""
    return Clustering((1, 2, 1), 2)


@pytest.fixture
def cluster_12_3():
    """Clusters {node0, node1} and {node2} over three unmeasured nodes."""
    return Clustering((1, 1, 2), 2)
