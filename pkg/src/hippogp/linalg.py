"""Symmetric-positive-definite solves with escalating diagonal jitter."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, eigh

from .errors import NumericsError

# Jitter escalation: start at 1e-10 * max(diag), grow tenfold, at most 6 retries.
JITTER_START = 1e-10
JITTER_GROWTH = 10.0
JITTER_MAX_RETRIES = 6


@dataclass(frozen=True)
class PsdSolveResult:
    x: np.ndarray
    logdet: float
    jitter: float

    def __iter__(self):
        return iter((self.x, self.logdet, self.jitter))


def _check_symmetric(K: np.ndarray, name: str) -> None:
    scale = max(np.max(np.abs(K)), 1.0)
    if np.max(np.abs(K - K.T)) > 1e-10 * scale:
        raise ValueError(f"{name} is not symmetric to within 1e-10 relative")


def psd_cholesky(Ksym: np.ndarray, name: str = "matrix") -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of Ksym plus whatever jitter was needed.

    Raises NumericsError with a smallest-eigenvalue estimate when the matrix
    stays indefinite at the maximum jitter.
    """
    Ksym = np.asarray(Ksym, dtype=float)
    if Ksym.ndim != 2 or Ksym.shape[0] != Ksym.shape[1]:
        raise ValueError(f"{name} must be square, got shape {Ksym.shape}")
    _check_symmetric(Ksym, name)
    max_diag = float(np.max(np.diag(Ksym))) if Ksym.size else 0.0
    base = JITTER_START * max(max_diag, np.finfo(float).tiny)
    jitter = 0.0
    for attempt in range(JITTER_MAX_RETRIES + 1):
        try:
            L = np.linalg.cholesky(Ksym + jitter * np.eye(Ksym.shape[0]))
            return L, jitter
        except np.linalg.LinAlgError:
            jitter = base * JITTER_GROWTH**attempt
    min_eig = float(eigh(Ksym, eigvals_only=True, subset_by_index=[0, 0])[0])
    raise NumericsError(
        f"{name} is not positive definite at maximum jitter {jitter:.3e}; "
        f"smallest eigenvalue ~ {min_eig:.3e}"
    )


def psd_solve(Ksym: np.ndarray, rhs: np.ndarray, name: str = "matrix") -> PsdSolveResult:
    """Solve Ksym x = rhs via Cholesky, escalating jitter until it succeeds.

    Returns the solution, the log-determinant of the jittered matrix, and the
    jitter applied.
    """
    L, jitter = psd_cholesky(Ksym, name)
    rhs = np.asarray(rhs, dtype=float)
    x = cho_solve((L, True), rhs)
    logdet = 2.0 * float(np.sum(np.log(np.diag(L))))
    return PsdSolveResult(x=x, logdet=logdet, jitter=jitter)


def psd_inverse(Ksym: np.ndarray, name: str = "matrix") -> np.ndarray:
    """Jittered symmetric inverse, symmetrized on the way out."""
    inv = psd_solve(Ksym, np.eye(np.asarray(Ksym).shape[0]), name).x
    return 0.5 * (inv + inv.T)
