"""Time-domain simulation of the plant and observer, plus error metrics."""

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .clustering import Clustering, averaging_operator
from .numerics import integrate_lti
from .observer import ObserverDesign
from .system import ClusteredNetworkSystem


@dataclass(frozen=True)
class InputSignal:
    """Per-channel sinusoids u_g(t) = a_g * sin(w_g * t + b_g)."""

    amplitudes: np.ndarray
    frequencies: np.ndarray
    phases: np.ndarray

    def __post_init__(self):
        for name in ("amplitudes", "frequencies", "phases"):
            arr = np.asarray(getattr(self, name), dtype=float).reshape(-1)
            if not np.isfinite(arr).all():
                raise ValueError(f"{name} must be finite")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not (self.amplitudes.size == self.frequencies.size == self.phases.size):
            raise ValueError("per-channel parameter arrays must have equal length")

    @property
    def channels(self) -> int:
        return self.amplitudes.size

    def __call__(self, t: float) -> np.ndarray:
        return self.amplitudes * np.sin(self.frequencies * t + self.phases)


def random_input(p: int, seed) -> InputSignal:
    """Input with amplitudes in (-0.05, 0.05), frequencies in (0, 0.5) rad/s,
    phases in (-pi, pi); deterministic per seed."""
    if p < 0:
        raise ValueError("channel count must be nonnegative")
    rng = np.random.default_rng(seed)
    return InputSignal(
        amplitudes=rng.uniform(-0.05, 0.05, size=p),
        frequencies=rng.uniform(0.0, 0.5, size=p),
        phases=rng.uniform(-np.pi, np.pi, size=p),
    )


@dataclass(frozen=True)
class SimResult:
    """Sampled trajectories: true cluster averages, estimates, errors, outputs.

    ``x`` is the full plant state series (measured-first ordering), kept so
    conservation and deviation quantities can be recomputed from a run.
    """

    times: np.ndarray
    z_true: np.ndarray
    z_hat: np.ndarray
    zeta: np.ndarray
    y: np.ndarray
    x: np.ndarray

    def __post_init__(self):
        lengths = {arr.shape[0] for arr in (self.times, self.z_true, self.z_hat, self.zeta, self.y, self.x)}
        if len(lengths) != 1:
            raise ValueError("series lengths differ")


def simulate(sys: ClusteredNetworkSystem, c: Clustering, design: ObserverDesign,
             x0, w0=None, u: InputSignal | None = None,
             dt: float = 0.01, duration: float = 60.0) -> SimResult:
    """Integrate the plant and observer jointly with fixed-step RK4.

    ``x0`` is the plant state in measured-first ordering; ``w0`` defaults to
    -L @ y(0) so the initial estimate is zero. Raises when the trajectory
    leaves the finite range, naming the first bad time.
    """
    m, n, k = sys.m, sys.n, design.k
    if c.n != n or design.R.shape[1] != n or design.L.shape[1] != m:
        raise ValueError("system, clustering and design dimensions are inconsistent")
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.size != m + n:
        raise ValueError(f"initial plant state has length {x0.size}, expected {m + n}")
    y0 = x0[:m]
    if w0 is None:
        w0 = -design.L @ y0
    w0 = np.asarray(w0, dtype=float).reshape(-1)
    if w0.size != k:
        raise ValueError(f"initial observer state has length {w0.size}, expected {k}")
    if u is not None and u.channels != sys.p:
        raise ValueError(f"input signal has {u.channels} channels, system expects {sys.p}")

    a_full = sys.full_state_matrix()
    b_full = sys.full_input_matrix()
    # Joint system over (x, w): the observer is driven by y = x[:m].
    a_aug = np.block([
        [a_full, np.zeros((m + n, k))],
        [np.hstack([design.K, np.zeros((k, n))]), design.M],
    ])
    b_aug = np.vstack([b_full, design.N])

    with np.errstate(over="ignore", invalid="ignore"):
        times, states = integrate_lti(a_aug, b_aug, u, np.concatenate([x0, w0]), dt, duration)

    finite = np.isfinite(states).all(axis=1)
    if not finite.all():
        bad = int(np.argmin(finite))
        raise FloatingPointError(f"state became non-finite at t={times[bad]:.6g} s")

    x = states[:, : m + n]
    w = states[:, m + n:]
    y = x[:, :m]
    qp = averaging_operator(c)
    z_true = x[:, m:] @ qp.T
    z_hat = w + y @ design.L.T
    return SimResult(times=times, z_true=z_true, z_hat=z_hat, zeta=z_true - z_hat, y=y, x=x)


def zeta_percent(res: SimResult, tail_fraction: float = 0.1) -> float:
    """Percentage asymptotic estimation error.

    Approximates the limit superior of ||zeta|| / ||z_true|| * 100 by the
    maximum over the final ``tail_fraction`` of samples.
    """
    if not 0.0 < tail_fraction <= 1.0:
        raise ValueError("tail_fraction must lie in (0, 1]")
    samples = res.times.shape[0]
    count = max(1, int(np.ceil(samples * tail_fraction)))
    z_norm = np.linalg.norm(res.z_true[-count:], axis=1)
    zeta_norm = np.linalg.norm(res.zeta[-count:], axis=1)
    if (z_norm == 0.0).any():
        raise ValueError("degenerate trajectory: true average is zero on the tail")
    return float(np.max(zeta_norm / z_norm) * 100.0)


def write_trajectory_csv(res: SimResult, path) -> None:
    """Export the sampled series with header t,z1..zk,zhat1..zhatk,zeta_norm."""
    k = res.z_true.shape[1]
    header = (["t"] + [f"z{i}" for i in range(1, k + 1)]
              + [f"zhat{i}" for i in range(1, k + 1)] + ["zeta_norm"])
    zeta_norm = np.linalg.norm(res.zeta, axis=1)
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(res.times.shape[0]):
            row = [repr(float(res.times[i]))]
            row += [repr(float(v)) for v in res.z_true[i]]
            row += [repr(float(v)) for v in res.z_hat[i]]
            row.append(repr(float(zeta_norm[i])))
            writer.writerow(row)
