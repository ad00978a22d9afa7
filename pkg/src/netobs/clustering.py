"""Partitions of unmeasured nodes, characteristic matrices, projected systems.

Cluster labels are 1-based; a valid clustering has every label in 1..k
present (empty clusters would make the averaging operator ill-defined).
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .numerics import RANK_TOL, as_matrix, numeric_rank
from .system import ClusteredNetworkSystem, _frozen


@dataclass(frozen=True)
class Clustering:
    """Assignment of each unmeasured node to a cluster label in 1..k."""

    assignment: tuple
    k: int

    def __post_init__(self):
        object.__setattr__(self, "assignment", tuple(int(a) for a in self.assignment))
        if self.k < 1:
            raise ValueError("need at least one cluster")
        if not self.assignment:
            raise ValueError("assignment must be nonempty")
        labels = set(self.assignment)
        if not labels.issubset(range(1, self.k + 1)):
            raise ValueError(f"labels must lie in 1..{self.k}")
        if len(labels) != self.k:
            missing = sorted(set(range(1, self.k + 1)) - labels)
            raise ValueError(f"empty cluster(s): labels {missing} unused")

    @property
    def n(self) -> int:
        return len(self.assignment)

    def members(self) -> list:
        """Node indices per cluster, in label order."""
        out = [[] for _ in range(self.k)]
        for node, label in enumerate(self.assignment):
            out[label - 1].append(node)
        return out


@dataclass(frozen=True)
class ProjectedSystem:
    """Aggregated (m + k)-state system driven by the average deviation."""

    E11: np.ndarray
    E12: np.ndarray
    E21: np.ndarray
    E22: np.ndarray
    F1: np.ndarray
    F2: np.ndarray
    G1: np.ndarray
    G2: np.ndarray

    def __post_init__(self):
        for name in ("E11", "E12", "E21", "E22", "F1", "F2", "G1", "G2"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))

    @property
    def m(self) -> int:
        return self.E11.shape[0]

    @property
    def k(self) -> int:
        return self.E22.shape[0]


def characteristic_matrix(c: Clustering) -> np.ndarray:
    """n x k 0/1 membership matrix with unit row sums."""
    q = np.zeros((c.n, c.k))
    q[np.arange(c.n), np.array(c.assignment) - 1] = 1.0
    return q


def left_pseudo(q) -> np.ndarray:
    """Left pseudo-inverse of a characteristic matrix: row-averaging operator.

    Computed in closed form (1/cluster size on members), never by a general
    pseudoinverse, so the identity Qplus @ Q = I holds to rounding.
    """
    qm = as_matrix(q, "characteristic matrix")
    if not np.isin(qm, (0.0, 1.0)).all() or not (qm.sum(axis=1) == 1.0).all():
        raise ValueError("not a characteristic matrix (entries 0/1 with unit row sums)")
    sizes = qm.sum(axis=0)
    if (sizes == 0).any():
        raise ValueError("empty cluster: a column of the characteristic matrix is zero")
    return (qm / sizes).T


def averaging_operator(c: Clustering) -> np.ndarray:
    """Left pseudo-inverse built directly from a clustering."""
    return left_pseudo(characteristic_matrix(c))


def project_system(sys: ClusteredNetworkSystem, c: Clustering, rank_tol: float = RANK_TOL) -> ProjectedSystem:
    """Aggregate the unmeasured block by cluster averaging.

    Requires the measured-from-unmeasured coupling block to have full row
    rank (the observer design downstream is ill-posed otherwise).
    """
    if c.n != sys.n:
        raise ValueError(f"clustering covers {c.n} nodes but system has {sys.n} unmeasured nodes")
    if numeric_rank(sys.A12, rank_tol) != sys.m:
        raise ValueError("coupling block A12 does not have full row rank; refusing to project")
    q = characteristic_matrix(c)
    qp = left_pseudo(q)
    return ProjectedSystem(
        E11=sys.A11,
        E12=sys.A12 @ q,
        E21=qp @ sys.A21,
        E22=qp @ sys.A22 @ q,
        F1=sys.A12,
        F2=qp @ sys.A22,
        G1=sys.B1,
        G2=qp @ sys.B2,
    )


def deviation(x2, c: Clustering) -> np.ndarray:
    """Each node's state minus its cluster mean (lies in the kernel of the averaging operator)."""
    x = np.asarray(x2, dtype=float).reshape(-1)
    if x.size != c.n:
        raise ValueError(f"state vector has length {x.size}, expected {c.n}")
    labels = np.array(c.assignment) - 1
    sums = np.bincount(labels, weights=x, minlength=c.k)
    counts = np.bincount(labels, minlength=c.k)
    return x - (sums / counts)[labels]


def stabilizability_rank_ok(a12, c: Clustering, rank_tol: float = RANK_TOL) -> bool:
    """True when the aggregated coupling block has full column rank k."""
    a = as_matrix(a12, "coupling block")
    if a.shape[1] != c.n:
        raise ValueError("coupling block width does not match clustering")
    return numeric_rank(a @ characteristic_matrix(c), rank_tol) == c.k


def cluster_constraint_ok(c: Clustering, nset) -> bool:
    """True when every cluster contains at least one node of ``nset``."""
    wanted = set(int(i) for i in nset)
    return all(any(node in wanted for node in cluster) for cluster in c.members())


def clustering_to_dict(c: Clustering) -> dict:
    return {"k": c.k, "assignment": list(c.assignment)}


def clustering_from_dict(payload: dict) -> Clustering:
    return Clustering(tuple(int(a) for a in payload["assignment"]), int(payload["k"]))


def save_clustering(c: Clustering, path, meta: dict | None = None) -> None:
    payload = clustering_to_dict(c)
    if meta is not None:
        payload["meta"] = meta
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def load_clustering(path) -> Clustering:
    return clustering_from_dict(json.loads(Path(path).read_text()))
