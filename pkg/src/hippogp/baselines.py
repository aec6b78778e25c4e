"""Dirac-basis covariances and inducing-set selection for the baseline methods.

Both baselines run through the same streaming update code as the HiPPO
method; only the covariance provider differs.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .kernels import KernelSpec, kernel_eval

MIN_SEPARATION = 1e-10


@dataclass(frozen=True)
class InducingSet:
    """Inducing locations plus how they were chosen."""

    Z: np.ndarray
    provenance: str  # resampled | pivoted-cholesky | fixed

    def __post_init__(self):
        Z = np.asarray(self.Z, dtype=float)
        if Z.ndim == 1:
            Z = Z[:, None]
        if Z.shape[0] >= 2:
            d = Z[:, None, :] - Z[None, :, :]
            dist = np.sqrt(np.sum(d * d, axis=-1))
            np.fill_diagonal(dist, np.inf)
            if dist.min() <= MIN_SEPARATION:
                raise ValueError("inducing locations must be pairwise distinct")
        Z.setflags(write=False)
        object.__setattr__(self, "Z", Z)

    def __len__(self) -> int:
        return self.Z.shape[0]


def dirac_covariances(kernel: KernelSpec, X, Z: InducingSet) -> tuple[np.ndarray, np.ndarray]:
    """Standard inducing-point covariances K_fu = k(X, Z), K_uu = k(Z, Z)."""
    return kernel_eval(kernel, X, Z.Z), kernel_eval(kernel, Z.Z, Z.Z)


def select_inducing_resample(
    Z_old: InducingSet | None, X_new, M: int, seed: int
) -> InducingSet:
    """Uniform sample of M locations without replacement from old Z plus the
    new batch inputs; deterministic given the seed, near-duplicates re-drawn."""
    X_new = np.asarray(X_new, dtype=float)
    if X_new.ndim == 1:
        X_new = X_new[:, None]
    pool = X_new if Z_old is None or len(Z_old) == 0 else np.vstack([Z_old.Z, X_new])
    if pool.shape[0] < M:
        raise ValueError(f"pool of {pool.shape[0]} candidates cannot supply {M} inducing points")
    rng = np.random.default_rng(seed)
    for _ in range(100):
        idx = rng.choice(pool.shape[0], size=M, replace=False)
        try:
            return InducingSet(Z=pool[np.sort(idx)], provenance="resampled")
        except ValueError:
            continue  # coincident locations in the draw; try again
    raise ValueError("could not draw M pairwise-distinct inducing locations from the pool")


def select_inducing_pivchol(
    kernel: KernelSpec, candidates, M: int, return_trace: bool = False
):
    """Greedy pivoted-Cholesky selection on k(candidates, candidates).

    Each step picks the candidate with the largest residual diagonal (ties to
    the lowest index) and downdates the residual kernel. Returns the pivots in
    selection order; stops early with a warning if the residual diagonal is
    exhausted below 1e-12.
    """
    X = np.asarray(candidates, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n = X.shape[0]
    if n < M:
        raise ValueError(f"{n} candidates cannot supply {M} inducing points")
    K = kernel_eval(kernel, X, X)
    d = np.diag(K).copy()
    L = np.zeros((n, M))
    pivots: list[int] = []
    traces = [float(d.sum())]
    for j in range(M):
        i = int(np.argmax(d))  # argmax returns the lowest index among ties
        if d[i] < 1e-12:
            warnings.warn(
                f"residual diagonal exhausted after {j} pivots (requested {M})",
                RuntimeWarning,
            )
            break
        pivots.append(i)
        L[:, j] = (K[:, i] - L[:, :j] @ L[i, :j]) / np.sqrt(d[i])
        d = np.maximum(d - L[:, j] ** 2, 0.0)
        d[i] = 0.0
        traces.append(float(d.sum()))
    selected = InducingSet(Z=X[pivots], provenance="pivoted-cholesky")
    if return_trace:
        return selected, traces
    return selected
