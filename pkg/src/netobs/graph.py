"""Weighted digraphs, random generators, connectivity and matching utilities.

Edge direction convention: an edge ``(to, frm, weight)`` carries flow from
node ``frm`` into node ``to``, so the adjacency matrix has
``A[to, frm] = weight``.
"""

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class Digraph:
    """Directed weighted graph with positive edge weights and no self-loops."""

    node_count: int
    edges: tuple  # of (to, frm, weight)

    def __post_init__(self):
        if self.node_count < 1:
            raise ValueError("graph needs at least one node")
        object.__setattr__(self, "edges", tuple((int(t), int(f), float(w)) for t, f, w in self.edges))
        seen = set()
        for to, frm, weight in self.edges:
            if not (0 <= to < self.node_count and 0 <= frm < self.node_count):
                raise ValueError(f"edge ({to},{frm}) references a node out of range")
            if to == frm:
                raise ValueError(f"self-loop on node {to} is not allowed")
            if not (weight > 0 and np.isfinite(weight)):
                raise ValueError(f"edge ({to},{frm}) must have a positive finite weight")
            if (to, frm) in seen:
                raise ValueError(f"duplicate edge ({to},{frm})")
            seen.add((to, frm))

    @property
    def edge_count(self) -> int:
        return len(self.edges)


@dataclass(frozen=True)
class NodePartition:
    """Split of node ids into measured and unmeasured groups (both nonempty)."""

    measured: tuple
    unmeasured: tuple

    def __post_init__(self):
        object.__setattr__(self, "measured", tuple(int(i) for i in self.measured))
        object.__setattr__(self, "unmeasured", tuple(int(i) for i in self.unmeasured))
        if not self.measured or not self.unmeasured:
            raise ValueError("both measured and unmeasured groups must be nonempty")
        if set(self.measured) & set(self.unmeasured):
            raise ValueError("measured and unmeasured groups overlap")
        if len(set(self.measured)) != len(self.measured) or len(set(self.unmeasured)) != len(self.unmeasured):
            raise ValueError("duplicate node ids in partition")

    @property
    def m(self) -> int:
        return len(self.measured)

    @property
    def n(self) -> int:
        return len(self.unmeasured)


def adjacency(g: Digraph) -> np.ndarray:
    """Dense adjacency matrix with A[to, frm] = weight."""
    a = np.zeros((g.node_count, g.node_count))
    if g.edges:
        arr = np.array(g.edges, dtype=float)
        a[arr[:, 0].astype(int), arr[:, 1].astype(int)] = arr[:, 2]
    return a


def erdos_renyi(total_nodes: int, p_edge: float, weight_low: float, weight_high: float, seed: int) -> Digraph:
    """Directed random graph: each ordered pair gets an edge with ``p_edge``.

    Edge weights are uniform in (weight_low, weight_high). Deterministic for a
    fixed seed.
    """
    if total_nodes < 2:
        raise ValueError("need at least two nodes")
    if not 0.0 <= p_edge <= 1.0:
        raise ValueError("p_edge must lie in [0, 1]")
    if not 0.0 < weight_low < weight_high:
        raise ValueError("weights require 0 < weight_low < weight_high")
    rng = np.random.default_rng(seed)
    mask = rng.random((total_nodes, total_nodes)) < p_edge
    np.fill_diagonal(mask, False)
    to_idx, frm_idx = np.nonzero(mask)
    weights = rng.uniform(weight_low, weight_high, size=to_idx.size)
    edges = tuple(zip(to_idx.tolist(), frm_idx.tolist(), weights.tolist()))
    return Digraph(total_nodes, edges)


def scale_free(total_nodes: int, bias: float, edge_count: int, seed: int) -> Digraph:
    """Preferential-attachment graph materialised as a symmetric digraph.

    Starts from a tree backbone, then keeps adding undirected edges whose
    endpoints are drawn with probability proportional to (degree + 1)**bias,
    until exactly ``edge_count`` undirected edges exist. Every undirected edge
    becomes two directed edges of weight 1. Deterministic for a fixed seed.
    """
    if total_nodes < 2:
        raise ValueError("need at least two nodes")
    if bias < 0:
        raise ValueError("bias must be nonnegative")
    if edge_count < total_nodes - 1:
        raise ValueError("edge_count must be at least total_nodes - 1")
    max_edges = total_nodes * (total_nodes - 1) // 2
    if edge_count > max_edges:
        raise ValueError(f"infeasible edge_count {edge_count}: at most {max_edges} undirected edges")

    rng = np.random.default_rng(seed)
    degree = np.zeros(total_nodes)
    linked = np.zeros((total_nodes, total_nodes), dtype=bool)
    undirected = []

    def add(a, b):
        undirected.append((a, b))
        linked[a, b] = linked[b, a] = True
        degree[a] += 1
        degree[b] += 1

    # Tree backbone: attach each new node to an existing one preferentially.
    for node in range(1, total_nodes):
        weights = (degree[:node] + 1.0) ** bias
        target = int(rng.choice(node, p=weights / weights.sum()))
        add(node, target)

    while len(undirected) < edge_count:
        open_slots = linked.sum(axis=1) < total_nodes - 1
        weights = ((degree + 1.0) ** bias) * open_slots
        a = int(rng.choice(total_nodes, p=weights / weights.sum()))
        allowed = ~linked[a]
        allowed[a] = False
        weights_b = ((degree + 1.0) ** bias) * allowed
        b = int(rng.choice(total_nodes, p=weights_b / weights_b.sum()))
        add(a, b)

    edges = []
    for a, b in undirected:
        edges.append((b, a, 1.0))
        edges.append((a, b, 1.0))
    return Digraph(total_nodes, tuple(edges))


def is_weakly_connected(g: Digraph, subset) -> bool:
    """True when the induced subgraph, directions ignored, is connected."""
    ids = [int(i) for i in subset]
    if not ids:
        raise ValueError("subset must be nonempty")
    for i in ids:
        if not 0 <= i < g.node_count:
            raise ValueError(f"node id {i} out of range")
    member = set(ids)
    parent = {i: i for i in member}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for to, frm, _ in g.edges:
        if to in member and frm in member:
            ra, rb = find(to), find(frm)
            if ra != rb:
                parent[ra] = rb
    roots = {find(i) for i in member}
    return len(roots) == 1


def neighbor_set_of_measured(a12) -> set:
    """Unmeasured nodes with at least one measured out-neighbor.

    These are the indices of the nonzero columns of the measured-from-unmeasured
    coupling block (m x n, nonnegative).
    """
    a = np.atleast_2d(np.asarray(a12, dtype=float))
    if (a < 0).any():
        raise ValueError("coupling block must be nonnegative")
    return set(np.nonzero((a != 0).any(axis=0))[0].tolist())


def max_bipartite_matching(pattern) -> int:
    """Size of a maximum matching of the bipartite graph of a boolean pattern.

    Rows and columns are the two vertex groups; a True entry is an edge. The
    result is the generic rank of any matrix with that sparsity pattern.
    Hopcroft-Karp augmenting-path implementation.
    """
    p = np.atleast_2d(np.asarray(pattern, dtype=bool))
    n_rows, n_cols = p.shape
    if n_rows == 0 or n_cols == 0 or not p.any():
        return 0
    adj = [np.nonzero(p[r])[0].tolist() for r in range(n_rows)]
    match_row = [-1] * n_rows
    match_col = [-1] * n_cols
    INF = n_rows + n_cols + 1

    dist = [0] * n_rows

    def bfs():
        queue = []
        for r in range(n_rows):
            if match_row[r] == -1:
                dist[r] = 0
                queue.append(r)
            else:
                dist[r] = INF
        found = INF
        head = 0
        while head < len(queue):
            r = queue[head]
            head += 1
            if dist[r] >= found:
                continue
            for c in adj[r]:
                nxt = match_col[c]
                if nxt == -1:
                    found = min(found, dist[r] + 1)
                elif dist[nxt] == INF:
                    dist[nxt] = dist[r] + 1
                    queue.append(nxt)
        return found != INF

    def dfs(r):
        for c in adj[r]:
            nxt = match_col[c]
            if nxt == -1 or (dist[nxt] == dist[r] + 1 and dfs(nxt)):
                match_row[r] = c
                match_col[c] = r
                return True
        dist[r] = INF
        return False

    size = 0
    while bfs():
        for r in range(n_rows):
            if match_row[r] == -1 and dfs(r):
                size += 1
    return size


def save_graph(g: Digraph, measured, csv_path) -> None:
    """Write the edge list as CSV plus a JSON sidecar with the node metadata.

    The sidecar (same stem, .json extension) records node_count and the
    measured node ids; unmeasured ids are everything else in ascending order.
    """
    path = Path(csv_path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["to", "from", "weight"])
        for to, frm, weight in g.edges:
            writer.writerow([to, frm, repr(weight)])
    sidecar = {"node_count": g.node_count, "measured": [int(i) for i in measured]}
    path.with_suffix(".json").write_text(json.dumps(sidecar, sort_keys=True, indent=2) + "\n")


def load_graph(csv_path):
    """Load a graph written by :func:`save_graph`.

    Returns ``(Digraph, NodePartition)``.
    """
    path = Path(csv_path)
    sidecar = json.loads(path.with_suffix(".json").read_text())
    node_count = int(sidecar["node_count"])
    measured = tuple(int(i) for i in sidecar["measured"])
    edges = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if [h.strip() for h in header] != ["to", "from", "weight"]:
            raise ValueError(f"unexpected edge CSV header: {header}")
        for row in reader:
            if not row:
                continue
            edges.append((int(row[0]), int(row[1]), float(row[2])))
    unmeasured = tuple(i for i in range(node_count) if i not in set(measured))
    return Digraph(node_count, tuple(edges)), NodePartition(measured, unmeasured)
