"""Dense linear-algebra and fixed-step integration kernels.

All functions are pure: inputs are validated, never mutated, and results are
plain numpy arrays. Matrices are rejected if they contain NaN or Inf.
"""

import numpy as np

#: Margin threshold: a matrix counts as Hurwitz when its largest eigenvalue
#: real part is below -HURWITZ_TOL.
HURWITZ_TOL = 1e-9

#: Relative singular-value cutoff used for rank decisions and pseudoinverses.
RANK_TOL = 1e-9


class UnstableDynamicsError(ValueError):
    """Lyapunov solve requested for a matrix that is not Hurwitz."""


def as_matrix(value, name: str = "matrix") -> np.ndarray:
    """Coerce to a 2-D float array (1-D input becomes a single row)."""
    arr = np.atleast_2d(np.asarray(value, dtype=float))
    if arr.ndim != 2:
        raise ValueError(f"{name} must be at most 2-dimensional, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def pseudoinverse(matrix, rank_tol: float = RANK_TOL) -> np.ndarray:
    """Moore-Penrose pseudoinverse with a relative singular-value cutoff.

    Singular values below ``rank_tol`` times the largest one are treated as
    zero, so rank-deficient input is handled gracefully.
    """
    a = as_matrix(matrix)
    if a.size == 0:
        raise ValueError("empty matrix")
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    cutoff = rank_tol * s[0] if s[0] > 0 else np.inf
    inv = np.where(s > cutoff, 1.0 / np.where(s > cutoff, s, 1.0), 0.0)
    return (vt.T * inv) @ u.T


def numeric_rank(matrix, tol: float = RANK_TOL) -> int:
    """Number of singular values above ``tol`` times the largest one."""
    if tol <= 0:
        raise ValueError("rank tolerance must be positive")
    a = as_matrix(matrix)
    if a.size == 0:
        return 0
    s = np.linalg.svd(a, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > tol * s[0]))


def hurwitz_margin(matrix) -> float:
    """Largest real part over the eigenvalues of a square matrix."""
    a = as_matrix(matrix)
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"matrix must be square, got shape {a.shape}")
    try:
        eigenvalues = np.linalg.eigvals(a)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"eigenvalue solver failed on shape {a.shape}: {exc}") from exc
    return float(eigenvalues.real.max())


def is_hurwitz(matrix, tol: float = HURWITZ_TOL) -> bool:
    """True when every eigenvalue real part is below ``-tol``."""
    return hurwitz_margin(matrix) < -tol


def lyapunov_gramian(state_matrix, input_matrix, hurwitz_tol: float = HURWITZ_TOL) -> np.ndarray:
    """Controllability gramian W solving M W + W M^T + R R^T = 0.

    Solved by vectorising the k^2 x k^2 linear system, which is exact and
    cheap because k stays small in this library. Raises
    :class:`UnstableDynamicsError` when M is not Hurwitz (the integral
    defining W diverges there).
    """
    m = as_matrix(state_matrix, "state matrix")
    r = as_matrix(input_matrix, "input matrix")
    k = m.shape[0]
    if m.shape[1] != k:
        raise ValueError(f"state matrix must be square, got shape {m.shape}")
    if r.shape[0] != k:
        raise ValueError(f"input matrix must have {k} rows, got {r.shape[0]}")
    if not hurwitz_margin(m) < -hurwitz_tol:
        raise UnstableDynamicsError("unstable error dynamics: state matrix is not Hurwitz")
    gram = r @ r.T
    eye = np.eye(k)
    lhs = np.kron(eye, m) + np.kron(m, eye)
    w = np.linalg.solve(lhs, -gram.reshape(-1)).reshape(k, k)
    return 0.5 * (w + w.T)


def integrate_lti(state_matrix, input_matrix, input_signal, initial_state, dt: float, duration: float):
    """Fixed-step RK4 trajectory of dx/dt = A x + B u(t).

    Returns ``(times, states)`` with samples at t = 0, dt, ..., duration.
    The trajectory always ends exactly at ``duration``: the step width is the
    closest value to ``dt`` that divides the horizon evenly (unchanged when
    duration is already a whole number of steps). ``input_matrix`` may be None
    for autonomous systems; ``input_signal`` is a callable mapping t to an
    input vector and may be None for zero input.
    """
    a = as_matrix(state_matrix, "state matrix")
    dim = a.shape[0]
    if a.shape[1] != dim:
        raise ValueError(f"state matrix must be square, got shape {a.shape}")
    x0 = np.asarray(initial_state, dtype=float).reshape(-1)
    if x0.size != dim:
        raise ValueError(f"initial state has length {x0.size}, expected {dim}")
    if not np.isfinite(x0).all():
        raise ValueError("initial state contains non-finite entries")
    if dt <= 0:
        raise ValueError("dt must be positive")
    if duration < dt:
        raise ValueError("duration must be at least one step")

    b = None
    u = None
    if input_matrix is not None:
        b = as_matrix(input_matrix, "input matrix")
        if b.shape[0] != dim:
            raise ValueError(f"input matrix must have {dim} rows, got {b.shape[0]}")
        n_inputs = b.shape[1]
        u = input_signal if input_signal is not None else (lambda t: np.zeros(n_inputs))

    steps = max(1, int(round(duration / dt)))
    dt = duration / steps
    times = np.arange(steps + 1) * dt
    states = np.empty((steps + 1, dim))
    states[0] = x0

    if b is None:
        def deriv(t, x):
            return a @ x
    else:
        def deriv(t, x):
            return a @ x + b @ np.asarray(u(t), dtype=float).reshape(-1)

    x = x0
    half = 0.5 * dt
    for i in range(steps):
        t = times[i]
        k1 = deriv(t, x)
        k2 = deriv(t + half, x + half * k1)
        k3 = deriv(t + half, x + half * k2)
        k4 = deriv(t + dt, x + dt * k3)
        x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        states[i + 1] = x
    return times, states
