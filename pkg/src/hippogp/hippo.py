"""HiPPO-LegS operators, scaled Legendre basis, and coefficient recurrences.

The memory state c(t) of a sampled signal evolves by the linear ODE
dc/dt = A(t) c + B(t) f(t) with A(t) = A/t, B(t) = B/t and constant matrices A
(lower triangular) and B. Discretizing with a forward-Euler or bilinear step
gives the online recurrence used throughout the covariance engine.

Note on the diagonal of A: some write-ups print it as "-n + 1", but only
-(n + 1) makes the projection of a constant signal stationary (for n = 0 the
coefficient c_0 = 1 must be a fixed point, requiring [A]_00 = -1). We use
-(n + 1), which the quadrature-oracle tests pin down.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericsError

SCHEMES = ("forward-euler", "bilinear")


def legs_operators(M: int) -> tuple[np.ndarray, np.ndarray]:
    """The constant LegS matrices A (M x M) and B (M,).

    [A]_nk = -sqrt((2n+1)(2k+1)) below the diagonal, -(n+1) on it, 0 above;
    [B]_n = sqrt(2n+1). The time-scaled operators are A(t) = A/t, B(t) = B/t.
    """
    if M < 1:
        raise ValueError(f"order must be at least 1, got {M}")
    n = np.arange(M)
    r = np.sqrt(2 * n + 1.0)
    A = -np.outer(r, r)
    A = np.tril(A, -1) - np.diag(n + 1.0)
    return A, r.copy()


@dataclass(frozen=True)
class HippoOperator:
    """LegS operator matrices together with the discretization choice."""

    order: int
    A: np.ndarray
    B: np.ndarray
    scheme: str
    dt: float
    k_start: int = 1

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}, expected one of {SCHEMES}")
        if self.dt <= 0:
            raise ValueError(f"step size must be positive, got {self.dt}")
        if self.k_start < 1:
            raise ValueError(f"start index must be >= 1, got {self.k_start}")
        self.A.setflags(write=False)
        self.B.setflags(write=False)

    @classmethod
    def legs(cls, M: int, dt: float, scheme: str = "bilinear", k_start: int = 1) -> "HippoOperator":
        A, B = legs_operators(M)
        return cls(order=M, A=A, B=B, scheme=scheme, dt=dt, k_start=k_start)


@dataclass(frozen=True)
class CoefficientState:
    """Projection coefficients of a signal's history at time t = k * dt."""

    c: np.ndarray
    t: float
    k: int

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float)
        c.setflags(write=False)
        object.__setattr__(self, "c", c)


def legs_basis_eval(M: int, t: float, xs) -> np.ndarray:
    """Evaluate g_m^(t)(x) = sqrt(2m+1) P_m(2x/t - 1) for m < M.

    Returns a |xs| x M matrix. The associated measure weight is 1/t on [0, t];
    the basis is orthonormal under it. Uses the three-term Legendre recurrence.
    """
    if M < 1:
        raise ValueError(f"order must be at least 1, got {M}")
    if t <= 0:
        raise ValueError(f"basis time must be positive, got {t}")
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    if np.any(xs < -1e-12 * t) or np.any(xs > t * (1 + 1e-12)):
        raise ValueError(f"basis arguments must lie in [0, {t}]")
    z = 2.0 * xs / t - 1.0
    P = np.empty((xs.size, M))
    P[:, 0] = 1.0
    if M > 1:
        P[:, 1] = z
    for m in range(1, M - 1):
        P[:, m + 1] = ((2 * m + 1) * z * P[:, m] - m * P[:, m - 1]) / (m + 1)
    return P * np.sqrt(2 * np.arange(M) + 1.0)


def evolve_stack(
    op: HippoOperator,
    drivers: np.ndarray,
    C0: np.ndarray,
    k_start: int | None = None,
    ks: np.ndarray | None = None,
    return_all: bool = False,
) -> np.ndarray:
    """Advance a stack of coefficient columns through the LegS recurrence.

    ``drivers`` has one row per visited grid index and one column per evolved
    coefficient vector; ``C0`` is M x ncols at the first index. Indices are
    k_start, k_start + 1, ... by default; a strided or otherwise increasing
    index sequence can be passed via ``ks`` (times are t = k * dt, the step is
    whatever separates consecutive indices).

    forward-euler:  c_{k'} = (I + h A/t_k) c_k + (h/t_k) B f(t_k)
    bilinear:       (I - h/2 A/t_k') c_{k'}
                      = (I + h/2 A/t_k) c_k + h/2 (B f(t_k)/t_k + B f(t_k')/t_k')
    """
    drivers = np.asarray(drivers, dtype=float)
    if drivers.ndim == 1:
        drivers = drivers[:, None]
    C = np.array(C0, dtype=float)
    if C.ndim == 1:
        C = C[:, None]
    M = op.order
    if C.shape[0] != M:
        raise ValueError(f"state has {C.shape[0]} rows, operator order is {M}")
    if drivers.shape[1] != C.shape[1]:
        raise ValueError(
            f"driver columns ({drivers.shape[1]}) do not match state columns ({C.shape[1]})"
        )
    if ks is None:
        k0 = op.k_start if k_start is None else k_start
        ks = k0 + np.arange(drivers.shape[0])
    else:
        ks = np.asarray(ks)
        if ks.shape != (drivers.shape[0],):
            raise ValueError("ks must align with driver rows")
        if np.any(np.diff(ks) <= 0):
            raise ValueError("grid indices must be strictly increasing")
    dt = op.dt
    I = np.eye(M)
    nsteps = drivers.shape[0] - 1
    out = np.empty((nsteps + 1,) + C.shape) if return_all else None
    if return_all:
        out[0] = C
    for i in range(nsteps):
        f_k = drivers[i]
        if not np.all(np.isfinite(f_k)):
            raise NumericsError(f"non-finite driver sample at step index {ks[i]}")
        t_k = ks[i] * dt
        t_k1 = ks[i + 1] * dt
        h = t_k1 - t_k
        if op.scheme == "forward-euler":
            C = (I + h * op.A / t_k) @ C + np.outer(op.B, f_k) * (h / t_k)
        else:
            rhs = (I + (0.5 * h / t_k) * op.A) @ C
            rhs += np.outer(op.B, f_k) * (0.5 * h / t_k)
            rhs += np.outer(op.B, drivers[i + 1]) * (0.5 * h / t_k1)
            C = np.linalg.solve(I - (0.5 * h / t_k1) * op.A, rhs)
        if return_all:
            out[i + 1] = C
    return out if return_all else C


def evolve_coefficients(
    op: HippoOperator,
    signal,
    c0=None,
    return_all: bool = False,
):
    """Evolve the memory state of a sampled scalar signal.

    ``signal`` holds samples f(k * dt) for k = op.k_start .. K. Returns the
    CoefficientState at t = K * dt, or the list of states at every grid index
    when return_all is set.

    When no initial state is given, the state at t0 = k_start * dt is seeded
    with f(t0) in the zeroth coefficient: the projection of any continuous
    signal onto the basis over a shrinking interval tends to that vector, and
    starting from zero instead leaves a slowly decaying transient.
    """
    signal = np.asarray(signal, dtype=float)
    if signal.ndim != 1 or signal.size < 1:
        raise ValueError("signal must be a non-empty 1D sample array")
    if c0 is None:
        c0 = np.zeros(op.order)
        c0[0] = signal[0]
    c0 = np.asarray(c0, dtype=float)
    if c0.shape != (op.order,):
        raise ValueError(f"initial coefficients must have length {op.order}")
    K = op.k_start + signal.size - 1
    res = evolve_stack(op, signal[:, None], c0[:, None], return_all=return_all)
    if return_all:
        return [
            CoefficientState(c=res[i, :, 0], t=(op.k_start + i) * op.dt, k=op.k_start + i)
            for i in range(res.shape[0])
        ]
    return CoefficientState(c=res[:, 0], t=K * op.dt, k=K)


def reconstruct_signal(state: CoefficientState, xs) -> np.ndarray:
    """Finite-basis reconstruction sum_m c_m g_m^(t)(x) at the given points."""
    G = legs_basis_eval(state.c.size, state.t, xs)
    return G @ state.c
