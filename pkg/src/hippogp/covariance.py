"""Time evolution of the interdomain prior covariances.

K_fu rows and random-feature columns are both HiPPO projection coefficients
and share the LegS recurrence; K_uu is assembled from feature snapshots
(default) or stepped directly as a matrix ODE (experimental, known to be the
less stable route).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import NumericsError, StateError
from .hippo import HippoOperator, evolve_stack, legs_basis_eval, legs_operators
from .kernels import KernelSpec, SpectralSample, kernel_eval
from .quadrature import gauss_legendre_nodes


@dataclass(frozen=True)
class TimeGrid:
    """A contiguous span of the discrete time axis, with the driver input
    observed at each grid index (times are t = k * dt).

    For 1D streams the driver at index k is the scalar time itself; in
    pseudo-time mode it is the ordered training input assigned to that index.
    ``stride`` > 1 visits every stride-th index (effective step stride * dt);
    the span length must be a multiple of the stride.
    """

    dt: float
    k_start: int
    k_end: int
    drivers: np.ndarray  # (k_end - k_start + 1, input_dim)
    stride: int = 1

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError(f"step size must be positive, got {self.dt}")
        if self.k_start < 1 or self.k_end < self.k_start:
            raise ValueError(f"invalid index span [{self.k_start}, {self.k_end}]")
        if self.stride < 1 or (self.k_end - self.k_start) % self.stride:
            raise ValueError("span must be a whole number of strides")
        drivers = np.asarray(self.drivers, dtype=float)
        if drivers.ndim == 1:
            drivers = drivers[:, None]
        if drivers.shape[0] != self.k_end - self.k_start + 1:
            raise ValueError(
                f"expected {self.k_end - self.k_start + 1} driver rows, got {drivers.shape[0]}"
            )
        drivers.setflags(write=False)
        object.__setattr__(self, "drivers", drivers)

    @classmethod
    def from_times(cls, dt: float, k_start: int, k_end: int, stride: int = 1) -> "TimeGrid":
        """1D grid whose driver inputs are the grid times themselves."""
        ts = np.arange(k_start, k_end + 1) * dt
        return cls(dt=dt, k_start=k_start, k_end=k_end, drivers=ts, stride=stride)

    @property
    def t_start(self) -> float:
        return self.k_start * self.dt

    @property
    def t_end(self) -> float:
        return self.k_end * self.dt

    def indices(self) -> np.ndarray:
        return np.arange(self.k_start, self.k_end + 1, self.stride)

    def strided_drivers(self) -> np.ndarray:
        return self.drivers[:: self.stride]

    def times(self) -> np.ndarray:
        return self.indices() * self.dt


@dataclass(frozen=True)
class CovarianceState:
    """Evolved covariance quantities frozen at time t = k * dt.

    ``kfu`` holds one row per tracked input; ``Z`` is the feature matrix with
    the cos block in columns [:N] and the sin block in [N:]; ``kuu`` and
    ``c_boundary`` are populated only on the direct-ODE path.
    """

    t: float
    k: int
    kfu: np.ndarray | None = None
    Z: np.ndarray | None = None
    kuu: np.ndarray | None = None
    c_boundary: np.ndarray | None = None
    freq_seed: int | None = None

    def __post_init__(self):
        for name in ("kfu", "Z", "kuu", "c_boundary"):
            arr = getattr(self, name)
            if arr is not None:
                arr = np.asarray(arr, dtype=float)
                arr.setflags(write=False)
                object.__setattr__(self, name, arr)


def _check_grid_alignment(grid: TimeGrid, state: CovarianceState | None) -> None:
    if state is not None and state.k != grid.k_start:
        raise StateError(
            f"state is at grid index {state.k} but the grid starts at {grid.k_start}"
        )


def evolve_kfu(
    kernel: KernelSpec,
    tracked,
    grid: TimeGrid,
    state: CovarianceState | None = None,
    order: int | None = None,
    scheme: str = "bilinear",
) -> CovarianceState:
    """Evolve the cross-covariance rows for the tracked inputs across the grid.

    Row n obeys d/dt row_n = A(t) row_n + B(t) k(x_n, driver(t)). A fresh
    state starts at the grid's first index with each row seeded by its first
    driver value in the zeroth coefficient.
    """
    _check_grid_alignment(grid, state)
    tracked = np.asarray(tracked, dtype=float)
    if tracked.ndim == 1:
        tracked = tracked[:, None]
    kx = kernel_eval(kernel, tracked, grid.strided_drivers())  # (n, nsteps+1)
    if not np.all(np.isfinite(kx)):
        raise NumericsError("non-finite kernel value while building K_fu drivers")
    M = _infer_order(state, grid, kx, default=order)
    op = HippoOperator.legs(M, grid.dt, scheme)
    if state is None or state.kfu is None:
        C0 = np.zeros((M, tracked.shape[0]))
        C0[0] = kx[:, 0]
    else:
        if state.kfu.shape[0] != tracked.shape[0]:
            raise StateError("tracked inputs changed shape relative to the state's K_fu rows")
        C0 = state.kfu.T
    C = evolve_stack(op, kx.T, C0, ks=grid.indices())
    base = state if state is not None else CovarianceState(t=grid.t_start, k=grid.k_start)
    return replace(base, t=grid.t_end, k=grid.k_end, kfu=C.T)


def _infer_order(state, grid, kx, default: int | None = None):
    if state is not None and state.kfu is not None:
        return state.kfu.shape[1]
    if default is not None:
        return default
    raise ValueError("cannot infer basis order; pass a state or explicit order")


def initial_kfu_state(M: int, kernel: KernelSpec, tracked, grid: TimeGrid) -> CovarianceState:
    """Fresh K_fu state at the grid's first index (rows seeded, no steps taken)."""
    tracked = np.asarray(tracked, dtype=float)
    if tracked.ndim == 1:
        tracked = tracked[:, None]
    k0 = kernel_eval(kernel, tracked, grid.drivers[:1])[:, 0]
    C = np.zeros((tracked.shape[0], M))
    C[:, 0] = k0
    return CovarianceState(t=grid.t_start, k=grid.k_start, kfu=C)


def evolve_rff_features(
    freqs: SpectralSample,
    grid: TimeGrid,
    state: CovarianceState | None = None,
    order: int | None = None,
    scheme: str = "bilinear",
) -> CovarianceState:
    """Evolve the random-feature matrix Z across the grid.

    Column n of the cos block is the projection state of h(t) = cos(w_n . x(t))
    where x(t) is the grid's driver input (the time itself on a 1D time grid);
    the sin block follows sin(w_n . x(t)). The frequency set is fixed for the
    lifetime of a stream: changing it invalidates every snapshot.
    """
    _check_grid_alignment(grid, state)
    if state is not None and state.freq_seed is not None and state.freq_seed != freqs.seed:
        raise StateError(
            f"frequency set changed mid-stream (seed {state.freq_seed} -> {freqs.seed}); "
            "all snapshots are invalid"
        )
    W = freqs.frequencies.reshape(freqs.n, -1)  # (N, d)
    drv = grid.strided_drivers()
    if drv.shape[1] != W.shape[1]:
        raise ValueError(
            f"driver dimension {drv.shape[1]} does not match frequency dimension {W.shape[1]}"
        )
    phases = drv @ W.T
    drivers = np.concatenate([np.cos(phases), np.sin(phases)], axis=1)  # (nsteps+1, 2N)
    if state is None or state.Z is None:
        if order is None:
            raise ValueError("order is required for a fresh feature state")
        M = order
        C0 = np.zeros((M, 2 * freqs.n))
        C0[0] = drivers[0]
    else:
        M = state.Z.shape[0]
        if state.Z.shape[1] != 2 * freqs.n:
            raise StateError("feature count does not match the state's Z matrix")
        C0 = state.Z
    op = HippoOperator.legs(M, grid.dt, scheme)
    Z = evolve_stack(op, drivers, C0, ks=grid.indices())
    base = state if state is not None else CovarianceState(t=grid.t_start, k=grid.k_start)
    return replace(base, t=grid.t_end, k=grid.k_end, Z=Z, freq_seed=freqs.seed)


def assemble_kuu(Z_a: np.ndarray, Z_b: np.ndarray, variance: float, n_samples: int) -> np.ndarray:
    """(sigma^2 / N) Z_a Z_b^T from two feature snapshots sharing one frequency
    set. Equal snapshot times give K_uu^(t) (symmetrized); distinct times give
    the cross-covariance between the two inducing snapshots."""
    Z_a = np.asarray(Z_a, dtype=float)
    Z_b = np.asarray(Z_b, dtype=float)
    if Z_a.shape[1] != Z_b.shape[1]:
        raise ValueError(f"feature counts differ: {Z_a.shape[1]} vs {Z_b.shape[1]}")
    K = (variance / n_samples) * (Z_a @ Z_b.T)
    if Z_a is Z_b or (Z_a.shape == Z_b.shape and np.array_equal(Z_a, Z_b)):
        K = 0.5 * (K + K.T)
    return K


def evolve_kuu_direct(
    kernel: KernelSpec,
    grid: TimeGrid,
    state: CovarianceState | None = None,
    order: int | None = None,
) -> CovarianceState:
    """Experimental direct matrix-ODE evolution of K_uu (forward Euler).

    Jointly steps dK/dt = A(t) K + K A(t)^T + (1/t)(B c(t)^T + c(t) B^T) and
    the boundary coefficients c via the LegS recurrence driven by the kernel
    profile k(lag), with the parity correction c_m = (-1)^m c~_m.

    The boundary matrix is written as c(t) 1^T in some derivations; the
    delta term of d(phi_l)/dt carries weight sqrt(2l+1)/t, so the boundary
    contribution is B c(t)^T. Only that form keeps the constant-kernel case
    (K_uu = sigma^2 e0 e0^T) stationary.
    """
    if kernel.input_dim != 1:
        raise ValueError("direct K_uu evolution requires a 1D stationary kernel")
    _check_grid_alignment(grid, state)
    M = order if state is None or state.kuu is None else state.kuu.shape[0]
    if M is None:
        raise ValueError("order is required for a fresh direct-ODE state")
    A, B = legs_operators(M)
    ts = grid.times()
    kprof = kernel_eval(kernel, np.zeros((1, 1)), ts[:, None])[0]  # k(lag) samples
    parity = (-1.0) ** np.arange(M)
    if state is None or state.kuu is None:
        K = np.zeros((M, M))
        K[0, 0] = kernel.variance
        c_t = np.zeros(M)
        c_t[0] = kprof[0]
    else:
        K = np.array(state.kuu)
        c_t = np.array(state.c_boundary)
    bound = 1e6 * kernel.variance
    for i in range(ts.size - 1):
        t_k = ts[i]
        h = ts[i + 1] - ts[i]
        c = parity * c_t
        K = K + (h / t_k) * (A @ K + K @ A.T + np.outer(B, c) + np.outer(c, B))
        K = 0.5 * (K + K.T)
        c_t = (np.eye(M) + (h / t_k) * A) @ c_t + (h / t_k) * B * kprof[i]
        if np.max(np.abs(K)) > bound:
            raise NumericsError(
                f"direct-ODE instability: |K_uu| exceeded {bound:.3e} at grid index "
                f"{grid.indices()[i + 1]}"
            )
    base = state if state is not None else CovarianceState(t=grid.t_start, k=grid.k_start)
    return replace(base, t=grid.t_end, k=grid.k_end, kuu=K, c_boundary=c_t)


def kfu_quadrature(kernel: KernelSpec, tracked, M: int, t: float, nodes: int = 512) -> np.ndarray:
    """Quadrature oracle for K_fu^(t): row n is the integral of
    k(x_n, x) g_m^(t)(x) / t over [0, t]."""
    xs, ws = gauss_legendre_nodes(0.0, t, nodes)
    tracked = np.asarray(tracked, dtype=float)
    if tracked.ndim == 1:
        tracked = tracked[:, None]
    Kx = kernel_eval(kernel, tracked, xs[:, None])
    G = legs_basis_eval(M, t, xs)
    return (Kx * ws) @ G / t


def kuu_quadrature(kernel: KernelSpec, M: int, t: float, nodes: int = 128) -> np.ndarray:
    """Double-quadrature oracle for K_uu^(t) on a nodes x nodes tensor grid."""
    xs, ws = gauss_legendre_nodes(0.0, t, nodes)
    Kxx = kernel_eval(kernel, xs[:, None], xs[:, None])
    Phi = legs_basis_eval(M, t, xs) * ws[:, None] / t
    K = Phi.T @ Kxx @ Phi
    return 0.5 * (K + K.T)
