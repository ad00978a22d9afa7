"""Average-state observer construction, error dynamics, and cost evaluation.

The observer of order k estimates the vector of cluster averages from the
measured states:

    dw/dt = M w + K y + N u,    z_hat = w + L y

Its estimation error obeys  d(zeta)/dt = M zeta + R sigma, where sigma is the
average deviation of the unmeasured states, so the design goal is a gain L
that makes M stable while shrinking the deviation-to-error channel R.
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .clustering import Clustering, averaging_operator, characteristic_matrix, project_system
from .numerics import (
    HURWITZ_TOL,
    RANK_TOL,
    as_matrix,
    hurwitz_margin,
    lyapunov_gramian,
    numeric_rank,
    pseudoinverse,
)
from .system import ClusteredNetworkSystem, _frozen


@dataclass(frozen=True)
class ObserverDesign:
    """Gain and derived matrices of an order-k average-state observer.

    L: (k, m) estimate correction gain on the measurements.
    M: (k, k) observer/error state matrix.
    K: (k, m) measurement drive.
    N: (k, p) input drive.
    R: (k, n) deviation-to-error input matrix (M = R @ Q holds identically).
    """

    L: np.ndarray
    M: np.ndarray
    K: np.ndarray
    N: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        for name in ("L", "M", "K", "N", "R"):
            object.__setattr__(self, name, _frozen(as_matrix(getattr(self, name), name)))
        k = self.M.shape[0]
        if self.M.shape != (k, k) or self.L.shape[0] != k or self.K.shape[0] != k:
            raise ValueError("observer matrices have inconsistent shapes")
        if self.N.shape[0] != k or self.R.shape[0] != k:
            raise ValueError("observer matrices have inconsistent shapes")

    @property
    def k(self) -> int:
        return self.M.shape[0]


def design_from_gain(sys: ClusteredNetworkSystem, c: Clustering, gain) -> ObserverDesign:
    """Observer matrices for an explicitly supplied gain L (k x m)."""
    l = as_matrix(gain, "gain")
    if l.shape != (c.k, sys.m):
        raise ValueError(f"gain must be {c.k} x {sys.m}, got {l.shape}")
    proj = project_system(sys, c)
    m_mat = proj.E22 - l @ proj.E12
    return ObserverDesign(
        L=l,
        M=m_mat,
        K=proj.E21 - l @ proj.E11 + m_mat @ l,
        N=proj.G2 - l @ proj.G1,
        R=proj.F2 - l @ proj.F1,
    )


def design_from_target(sys: ClusteredNetworkSystem, c: Clustering, target,
                       rank_tol: float = RANK_TOL) -> ObserverDesign:
    """Observer design that steers the error dynamics toward a target matrix.

    The gain is the least-squares solution making the deviation channel as
    close as possible to ``target @ averaging_operator``; when the system is
    tunable this is exact and the error obeys d(zeta)/dt = target @ zeta.
    Requires the coupling block A12 to have full row rank.
    """
    v = as_matrix(target, "target")
    if v.shape != (c.k, c.k):
        raise ValueError(f"target must be {c.k} x {c.k}, got {v.shape}")
    if numeric_rank(sys.A12, rank_tol) != sys.m:
        raise ValueError("coupling block A12 does not have full row rank; refusing to design")
    qp = averaging_operator(c)
    gain = (qp @ sys.A22 - v @ qp) @ pseudoinverse(sys.A12, rank_tol)
    return design_from_gain(sys, c, gain)


def optimal_target(sys: ClusteredNetworkSystem, c: Clustering) -> np.ndarray:
    """Cluster-averaged unmeasured block: the deviation-minimising target."""
    qp = averaging_operator(c)
    return qp @ sys.A22 @ characteristic_matrix(c)


def scaled_target(sys: ClusteredNetworkSystem, c: Clustering, phi: float) -> np.ndarray:
    """Optimal target scaled by the gain parameter phi."""
    return float(phi) * optimal_target(sys, c)


class PhiFamily:
    """Error matrices as an affine family in the scalar gain parameter.

    For a fixed clustering, the gain from :func:`design_from_target` with the
    scaled target makes both the error state matrix and the deviation channel
    affine in phi. One precomputation therefore supports many cheap
    evaluations during a parameter search:

        R(phi) = R0 + phi * R1,    M(phi) = R(phi) @ Q
    """

    def __init__(self, sys: ClusteredNetworkSystem, c: Clustering, a12_projector=None,
                 rank_tol: float = RANK_TOL, hurwitz_tol: float = HURWITZ_TOL):
        if c.n != sys.n:
            raise ValueError("clustering does not match system dimensions")
        if numeric_rank(sys.A12, rank_tol) != sys.m:
            raise ValueError("coupling block A12 does not have full row rank; refusing to design")
        self.hurwitz_tol = hurwitz_tol
        q = characteristic_matrix(c)
        qp = (q / q.sum(axis=0)).T
        qp_a22 = qp @ sys.A22
        if a12_projector is None:
            a12_projector = pseudoinverse(sys.A12, rank_tol) @ sys.A12
        proj = a12_projector
        self.r0 = qp_a22 - qp_a22 @ proj
        self.r1 = qp_a22 @ (q @ (qp @ proj))
        self.m0 = self.r0 @ q
        self.m1 = self.r1 @ q

    def error_matrices(self, phi: float):
        """(state matrix, deviation channel) at the given gain parameter."""
        phi = float(phi)
        return self.m0 + phi * self.m1, self.r0 + phi * self.r1

    def state_matrix(self, phi: float) -> np.ndarray:
        return self.m0 + float(phi) * self.m1

    def margin(self, phi: float) -> float:
        return hurwitz_margin(self.state_matrix(phi))

    def is_hurwitz(self, phi: float) -> bool:
        return self.margin(phi) < -self.hurwitz_tol

    def cost(self, phi: float) -> float:
        m_mat, r_mat = self.error_matrices(phi)
        return h2_cost(m_mat, r_mat, self.hurwitz_tol)


def error_matrices(sys: ClusteredNetworkSystem, c: Clustering, phi: float,
                   rank_tol: float = RANK_TOL):
    """Closed-form error matrices (M, R) at a gain parameter value.

    Agrees with :func:`design_from_target` evaluated at the scaled target.
    """
    return PhiFamily(sys, c, rank_tol=rank_tol).error_matrices(phi)


def h2_cost(state_matrix, input_matrix, hurwitz_tol: float = HURWITZ_TOL) -> float:
    """Trace of the controllability gramian, or +inf when unstable.

    This is the squared H2 norm of the deviation-to-error transfer; the
    infinity sentinel lets greedy loops compare candidates uniformly.
    """
    m = as_matrix(state_matrix, "state matrix")
    if not hurwitz_margin(m) < -hurwitz_tol:
        return float("inf")
    return float(np.trace(lyapunov_gramian(m, input_matrix, hurwitz_tol)))


def is_tunable(sys: ClusteredNetworkSystem, c: Clustering, rank_tol: float = RANK_TOL) -> bool:
    """True when the error can be driven to zero at any prescribed rate.

    Checks that stacking the averaged unmeasured block and the averaging
    operator under the coupling block does not increase its rank.
    """
    qp = averaging_operator(c)
    stacked = np.vstack([sys.A12, qp @ sys.A22, qp])
    return numeric_rank(stacked, rank_tol) == numeric_rank(sys.A12, rank_tol)


def design_to_dict(design: ObserverDesign) -> dict:
    return {name: getattr(design, name).tolist() for name in ("L", "M", "K", "N", "R")}


def design_from_dict(payload: dict) -> ObserverDesign:
    return ObserverDesign(**{name: np.array(payload[name], dtype=float) for name in ("L", "M", "K", "N", "R")})


def save_design(design: ObserverDesign, path, meta: dict | None = None, extra: dict | None = None) -> None:
    payload = design_to_dict(design)
    if extra:
        payload.update(extra)
    if meta is not None:
        payload["meta"] = meta
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def load_design(path) -> ObserverDesign:
    return design_from_dict(json.loads(Path(path).read_text()))
