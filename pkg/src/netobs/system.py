"""Clustered network systems: block state-space assembly and assumption checks.

A system stores the state matrix in measured-first block form

    A = [[A11, A12],
         [A21, A22]]

with the output fixed to the measured states (C = [I 0], never stored).
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import graph as graph_mod
from .numerics import RANK_TOL, as_matrix, numeric_rank

#: Slack for the edge-weight dominance comparisons in check_assumptions;
#: guards against order-of-summation roundoff on exactly-tied instances.
DOMINANCE_SLACK = 1e-9


def _frozen(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class ClusteredNetworkSystem:
    """Block matrices of a network ODE with measured nodes ordered first."""

    A11: np.ndarray
    A12: np.ndarray
    A21: np.ndarray
    A22: np.ndarray
    B1: np.ndarray
    B2: np.ndarray

    def __post_init__(self):
        for name in ("A11", "A12", "A21", "A22", "B1", "B2"):
            object.__setattr__(self, name, _frozen(as_matrix(getattr(self, name), name)))
        m = self.A11.shape[0]
        n = self.A22.shape[0]
        if self.A11.shape != (m, m) or self.A22.shape != (n, n):
            raise ValueError("diagonal blocks must be square")
        if self.A12.shape != (m, n) or self.A21.shape != (n, m):
            raise ValueError("off-diagonal blocks have inconsistent shapes")
        if self.B1.shape[0] != m or self.B2.shape[0] != n or self.B1.shape[1] != self.B2.shape[1]:
            raise ValueError("input blocks have inconsistent shapes")

    @property
    def m(self) -> int:
        return self.A11.shape[0]

    @property
    def n(self) -> int:
        return self.A22.shape[0]

    @property
    def p(self) -> int:
        return self.B1.shape[1]

    def full_state_matrix(self) -> np.ndarray:
        return np.block([[self.A11, self.A12], [self.A21, self.A22]])

    def full_input_matrix(self) -> np.ndarray:
        return np.vstack([self.B1, self.B2])


@dataclass(frozen=True)
class AssumptionReport:
    """Diagnostics for the standing structural assumptions.

    ``coupling_sums`` holds, per unmeasured node, the total weight of edges
    going into and out of it within the unmeasured subgraph; dominance
    requires each of these to stay within twice the node's self-decay, with
    at least one strict inequality.
    """

    a1_rank_ok: bool
    a2_connected: bool
    a2_diagonal_dominance: bool
    coupling_sums: tuple

    def all_ok(self) -> bool:
        return self.a1_rank_ok and self.a2_connected and self.a2_diagonal_dominance

    def summary(self) -> str:
        flag = {True: "ok", False: "FAIL"}
        return (
            f"A12 full row rank: {flag[self.a1_rank_ok]}; "
            f"unmeasured subgraph weakly connected: {flag[self.a2_connected]}; "
            f"edge-weight dominance: {flag[self.a2_diagonal_dominance]}"
        )


def flow_system_from_graph(g: graph_mod.Digraph, partition: graph_mod.NodePartition, input_matrix) -> ClusteredNetworkSystem:
    """Assemble the linear flow model of a digraph.

    The state matrix is adjacency minus the diagonal of out-weights (column
    sums), so every column of the assembled matrix sums to zero; nodes are
    reordered measured-first before splitting into blocks.
    """
    order = list(partition.measured) + list(partition.unmeasured)
    if sorted(order) != list(range(g.node_count)):
        raise ValueError("partition inconsistent with graph: node ids must cover the graph exactly")
    b = as_matrix(input_matrix, "input matrix")
    if b.shape[0] != g.node_count:
        raise ValueError(f"input matrix must have {g.node_count} rows, got {b.shape[0]}")
    adj = graph_mod.adjacency(g)
    a = adj - np.diag(adj.sum(axis=0))
    a = a[np.ix_(order, order)]
    b = b[order, :]
    m = partition.m
    return ClusteredNetworkSystem(
        A11=a[:m, :m], A12=a[:m, m:], A21=a[m:, :m], A22=a[m:, m:], B1=b[:m], B2=b[m:]
    )


def validate_metzler(sys: ClusteredNetworkSystem) -> bool:
    """True when the assembled state matrix has nonnegative off-diagonal and nonpositive diagonal."""
    a = sys.full_state_matrix()
    diag = np.diag(a)
    off = a - np.diag(diag)
    return bool((off >= 0).all() and (diag <= 0).all())


def check_assumptions(sys: ClusteredNetworkSystem, rank_tol: float = RANK_TOL) -> AssumptionReport:
    """Report on the structural assumptions without raising.

    Checks: full row rank of the measured-from-unmeasured coupling, weak
    connectivity of the unmeasured subgraph, and per-node edge-weight
    dominance over the unmeasured block.
    """
    a1 = numeric_rank(sys.A12, rank_tol) == sys.m

    a22 = sys.A22
    n = sys.n
    off_mask = a22 != 0
    np.fill_diagonal(off_mask, False)
    to_idx, frm_idx = np.nonzero(off_mask)
    edges = tuple(zip(to_idx.tolist(), frm_idx.tolist(), np.abs(a22[off_mask]).tolist()))
    connected = graph_mod.is_weakly_connected(graph_mod.Digraph(n, edges), range(n)) if n >= 1 else False

    diag = np.diag(a22)
    sums = a22.sum(axis=0) + a22.sum(axis=1) - 2.0 * diag
    bound = 2.0 * np.abs(diag)
    slack = DOMINANCE_SLACK * max(1.0, float(np.abs(a22).max()) if a22.size else 1.0)
    dominance = bool((sums <= bound + slack).all() and (sums < bound - slack).any())

    return AssumptionReport(
        a1_rank_ok=bool(a1),
        a2_connected=bool(connected),
        a2_diagonal_dominance=dominance,
        coupling_sums=tuple(float(s) for s in sums),
    )


def system_to_dict(sys: ClusteredNetworkSystem) -> dict:
    return {
        "m": sys.m,
        "n": sys.n,
        "p": sys.p,
        "A11": sys.A11.tolist(),
        "A12": sys.A12.tolist(),
        "A21": sys.A21.tolist(),
        "A22": sys.A22.tolist(),
        "B1": sys.B1.tolist(),
        "B2": sys.B2.tolist(),
    }


def system_from_dict(payload: dict) -> ClusteredNetworkSystem:
    sys = ClusteredNetworkSystem(
        A11=np.array(payload["A11"], dtype=float),
        A12=np.array(payload["A12"], dtype=float),
        A21=np.array(payload["A21"], dtype=float),
        A22=np.array(payload["A22"], dtype=float),
        B1=np.array(payload["B1"], dtype=float),
        B2=np.array(payload["B2"], dtype=float),
    )
    for key in ("m", "n", "p"):
        if key in payload and int(payload[key]) != getattr(sys, key):
            raise ValueError(f"dimension header {key}={payload[key]} does not match matrix shapes")
    return sys


def save_system(sys: ClusteredNetworkSystem, path, meta: dict | None = None) -> None:
    payload = system_to_dict(sys)
    if meta is not None:
        payload["meta"] = meta
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def load_system(path) -> ClusteredNetworkSystem:
    return system_from_dict(json.loads(Path(path).read_text()))
