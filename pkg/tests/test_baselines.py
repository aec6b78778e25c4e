import numpy as np
import pytest

from hippogp.baselines import (
    InducingSet,
    dirac_covariances,
    select_inducing_pivchol,
    select_inducing_resample,
)
from hippogp.kernels import KernelSpec, kernel_eval

KERNEL = KernelSpec(variance=1.0, lengthscales=(0.5,), noise_variance=0.1)


def test_inducing_set_rejects_duplicates():
    with pytest.raises(ValueError, match="distinct"):
        InducingSet(Z=np.array([[0.1], [0.1]]), provenance="fixed")


def test_dirac_covariances_analytic():
    Z = InducingSet(Z=np.array([[0.0], [0.5]]), provenance="fixed")
    kfu, kuu = dirac_covariances(KERNEL, np.array([[0.0]]), Z)
    assert kfu.shape == (1, 2)
    assert kfu[0, 0] == pytest.approx(1.0)
    assert kfu[0, 1] == pytest.approx(np.exp(-0.5))
    assert np.allclose(np.diag(kuu), KERNEL.variance)
    assert kuu[0, 1] == pytest.approx(np.exp(-0.5))


# --- resampling --------------------------------------------------------------


def test_resample_empty_batch_keeps_old_set():
    Z_old = InducingSet(Z=np.arange(5, dtype=float), provenance="fixed")
    picked = select_inducing_resample(Z_old, np.zeros((0, 1)), 5, seed=0)
    assert sorted(picked.Z[:, 0]) == sorted(Z_old.Z[:, 0])


def test_resample_deterministic_per_seed():
    X = np.linspace(0, 1, 40)[:, None]
    a = select_inducing_resample(None, X, 8, seed=3)
    b = select_inducing_resample(None, X, 8, seed=3)
    c = select_inducing_resample(None, X, 8, seed=4)
    assert np.array_equal(a.Z, b.Z)
    assert not np.array_equal(a.Z, c.Z)
    assert a.provenance == "resampled"


def test_resample_uniform_over_pool():
    # each of 20 candidates should appear in a size-5 draw with p = 1/4
    X = np.arange(20, dtype=float)[:, None]
    counts = np.zeros(20)
    trials = 1000
    for s in range(trials):
        picked = select_inducing_resample(None, X, 5, seed=s)
        counts[picked.Z[:, 0].astype(int)] += 1
    p = 5 / 20
    sigma = np.sqrt(trials * p * (1 - p))
    assert np.max(np.abs(counts - trials * p)) < 3.5 * sigma


def test_resample_pool_too_small():
    with pytest.raises(ValueError, match="pool"):
        select_inducing_resample(None, np.zeros((3, 1)), 5, seed=0)


# --- pivoted Cholesky ---------------------------------------------------------


def test_pivchol_first_pivot_lowest_index_on_ties():
    # stationary kernel: all residual diagonals tie at variance initially
    X = np.linspace(0, 3, 10)[:, None]
    picked = select_inducing_pivchol(KERNEL, X, 3)
    assert picked.provenance == "pivoted-cholesky"
    assert picked.Z[0, 0] == pytest.approx(X[0, 0])


def test_pivchol_full_rank_drives_residual_to_zero():
    rng = np.random.default_rng(0)
    X = np.sort(rng.uniform(0, 5, 9))[:, None]
    picked, traces = select_inducing_pivchol(KERNEL, X, 9, return_trace=True)
    assert len(picked) == 9
    assert traces[-1] < 1e-8
    assert all(b <= a + 1e-12 for a, b in zip(traces, traces[1:]))  # monotone


def test_pivchol_exhaustion_warns():
    # near-coincident candidates: rank of the kernel matrix is ~1
    X = np.array([[0.0], [1e-8], [2e-8], [3e-8]])
    with pytest.warns(RuntimeWarning, match="exhausted"):
        picked = select_inducing_pivchol(KERNEL, X, 3)
    assert len(picked) < 3


def test_pivchol_too_few_candidates():
    with pytest.raises(ValueError, match="candidates"):
        select_inducing_pivchol(KERNEL, np.zeros((2, 1)), 5)


def _nystrom_trace_error(kernel, X, Z):
    Kxx = kernel_eval(kernel, X, X)
    Kxz = kernel_eval(kernel, X, Z)
    Kzz = kernel_eval(kernel, Z, Z)
    resid = Kxx - Kxz @ np.linalg.solve(Kzz + 1e-10 * np.eye(Z.shape[0]), Kxz.T)
    return float(np.trace(resid))


def test_pivchol_beats_random_pivots_on_average():
    rng = np.random.default_rng(7)
    X = np.sort(rng.uniform(0, 10, 60))[:, None]
    kernel = KernelSpec(variance=1.0, lengthscales=(0.4,), noise_variance=0.1)
    M = 8
    greedy = select_inducing_pivchol(kernel, X, M)
    err_greedy = _nystrom_trace_error(kernel, X, greedy.Z)
    errs_random = []
    for s in range(50):
        idx = np.random.default_rng(s).choice(60, size=M, replace=False)
        errs_random.append(_nystrom_trace_error(kernel, X, X[np.sort(idx)]))
    assert err_greedy <= np.mean(errs_random)
