"""ARD-RBF kernel evaluation and 1D spectral frequency sampling."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class KernelSpec:
    """Squared-exponential kernel with per-dimension lengthscales plus observation noise.

    ``variance`` is the signal variance (target units squared), ``lengthscales``
    one positive scale per input dimension, ``noise_variance`` the Gaussian
    observation noise.
    """

    variance: float
    lengthscales: tuple[float, ...]
    noise_variance: float = 0.0

    def __post_init__(self):
        if self.variance <= 0:
            raise ValueError(f"signal variance must be positive, got {self.variance}")
        ls = tuple(float(l) for l in np.atleast_1d(self.lengthscales))
        if any(l <= 0 for l in ls):
            raise ValueError(f"lengthscales must be positive, got {ls}")
        if self.noise_variance < 0:
            raise ValueError(f"noise variance must be non-negative, got {self.noise_variance}")
        object.__setattr__(self, "lengthscales", ls)

    @property
    def input_dim(self) -> int:
        return len(self.lengthscales)


@dataclass(frozen=True)
class SpectralSample:
    """Frequencies drawn from the kernel's spectral density.

    Shape (n,) for a scalar input axis, or (n, d) for d-dimensional inputs.
    """

    frequencies: np.ndarray
    seed: int

    def __post_init__(self):
        freqs = np.asarray(self.frequencies, dtype=float)
        if freqs.ndim not in (1, 2) or freqs.size < 1:
            raise ValueError("frequencies must be a non-empty (n,) or (n, d) array")
        freqs.setflags(write=False)
        object.__setattr__(self, "frequencies", freqs)

    @property
    def n(self) -> int:
        return self.frequencies.shape[0]

    @property
    def dim(self) -> int:
        return 1 if self.frequencies.ndim == 1 else self.frequencies.shape[1]


def _as_inputs(X, dim: int, name: str) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[1] != dim:
        raise ValueError(f"{name} has dimensionality {X.shape[1:]} incompatible with kernel dim {dim}")
    return X


def kernel_eval(spec: KernelSpec, X1, X2) -> np.ndarray:
    """Kernel matrix k(X1, X2) under the ARD-RBF kernel.

    Entry (i, j) is sigma^2 exp(-0.5 sum_d (x1_id - x2_jd)^2 / l_d^2).
    """
    X1 = _as_inputs(X1, spec.input_dim, "X1")
    X2 = _as_inputs(X2, spec.input_dim, "X2")
    ls = np.asarray(spec.lengthscales)
    d = (X1[:, None, :] - X2[None, :, :]) / ls
    return spec.variance * np.exp(-0.5 * np.sum(d * d, axis=-1))


def kernel_diag(spec: KernelSpec, X) -> np.ndarray:
    """Prior variances k(x, x), constant for a stationary kernel."""
    X = _as_inputs(X, spec.input_dim, "X")
    return np.full(X.shape[0], spec.variance)


def spectral_sample(spec: KernelSpec, n: int, seed: int) -> SpectralSample:
    """Draw n frequencies from the RBF spectral density, a zero-mean Gaussian
    with standard deviation 1/lengthscale. Deterministic given the seed.

    Only 1D kernels are supported; the random-feature machinery runs along the
    scalar (pseudo-)time axis.
    """
    if spec.input_dim != 1:
        raise ValueError("spectral sampling supports 1D kernels only")
    if n < 1:
        raise ValueError(f"need at least one frequency, got {n}")
    rng = np.random.default_rng(seed)
    freqs = rng.normal(0.0, 1.0 / spec.lengthscales[0], size=n)
    return SpectralSample(frequencies=freqs, seed=seed)


def spectral_sample_ard(spec: KernelSpec, n: int, seed: int) -> SpectralSample:
    """Frequency vectors w_i ~ N(0, diag(1/lengthscale^2)) for the ARD-RBF
    spectral density in any input dimension. Deterministic given the seed."""
    if n < 1:
        raise ValueError(f"need at least one frequency, got {n}")
    rng = np.random.default_rng(seed)
    scales = 1.0 / np.asarray(spec.lengthscales)
    freqs = rng.normal(0.0, 1.0, size=(n, spec.input_dim)) * scales
    return SpectralSample(frequencies=freqs, seed=seed)


def rff_kernel_approx(spec: KernelSpec, sample: SpectralSample, x1, x2) -> np.ndarray:
    """Monte-Carlo kernel approximation from cos/sin features.

    (sigma^2 / N) * sum_n [cos(w_n x) cos(w_n x') + sin(w_n x) sin(w_n x')],
    which for the RBF spectral density converges to kernel_eval at rate N^(-1/2).
    """
    x1 = np.atleast_1d(np.asarray(x1, dtype=float))
    x2 = np.atleast_1d(np.asarray(x2, dtype=float))
    w = sample.frequencies
    c1, s1 = np.cos(np.outer(x1, w)), np.sin(np.outer(x1, w))
    c2, s2 = np.cos(np.outer(x2, w)), np.sin(np.outer(x2, w))
    return (spec.variance / sample.n) * (c1 @ c2.T + s1 @ s2.T)
