import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hippogp.covariance import TimeGrid, assemble_kuu, kuu_quadrature
from hippogp.errors import NumericsError, StateError
from hippogp.kernels import KernelSpec, kernel_eval
from hippogp.linalg import psd_solve
from hippogp.posterior import (
    DiracBasisTag,
    GaussianPosterior,
    HippoBasisTag,
    OnlineCovariances,
    TaskBatch,
    fit_first_task,
    gaussian_kl,
    natural_first_task,
    natural_posterior,
    natural_update,
    online_elbo,
    online_update,
    predict,
    reconstruct_posterior,
)

KERNEL = KernelSpec(variance=1.0, lengthscales=(0.3,), noise_variance=0.1)


def make_instance(seed, n=20, spread=4.0, kernel=KERNEL):
    """Well-conditioned Dirac instance: inducing at every datum."""
    rng = np.random.default_rng(seed)
    X = np.sort(rng.uniform(0, spread, n))[:, None]
    y = np.sin(1.5 * X[:, 0]) + 0.1 * rng.normal(size=n)
    Kxx = kernel_eval(kernel, X, X)
    return X, y, Kxx


def batch_of(y, idx=0):
    return TaskBatch(inputs=np.zeros((y.size, 1)), targets=y, task_index=idx, t_prev=0.0, t_cur=1.0)


# --- first-task fit ---------------------------------------------------------


def test_infinite_noise_limit_recovers_prior():
    X, y, Kxx = make_instance(0)
    loud = KernelSpec(variance=1.0, lengthscales=(0.3,), noise_variance=1e12)
    covs = OnlineCovariances(kuu_new=Kxx, kfu_new=Kxx)
    q, _ = fit_first_task(covs, y, loud, DiracBasisTag(Z=X))
    assert np.max(np.abs(q.m_u)) < 1e-6
    assert np.max(np.abs(q.S_u - Kxx)) < 1e-6 * np.max(np.abs(Kxx))


def test_inducing_at_every_datum_matches_exact_gp():
    X, y, Kxx = make_instance(1)
    covs = OnlineCovariances(kuu_new=Kxx, kfu_new=Kxx)
    q, _ = fit_first_task(covs, y, KERNEL, DiracBasisTag(Z=X))
    mean, var = predict(q, Kxx, Kxx, np.full(y.size, KERNEL.variance))
    Ky = Kxx + KERNEL.noise_variance * np.eye(y.size)
    exact_mean = Kxx @ psd_solve(Ky, y).x
    exact_cov = Kxx - Kxx @ psd_solve(Ky, Kxx).x
    assert np.max(np.abs(mean - exact_mean)) < 1e-8
    assert np.max(np.abs(var - np.diag(exact_cov))) < 1e-8


def exact_log_marginal(Kxx, y, noise):
    Ky = Kxx + noise * np.eye(y.size)
    sol = psd_solve(Ky, y)
    return -0.5 * y @ sol.x - 0.5 * sol.logdet - 0.5 * y.size * np.log(2 * np.pi)


def test_elbo_lower_bounds_log_marginal_on_random_instances():
    for seed in range(20):
        rng = np.random.default_rng(seed)
        n, m = 15, 6
        X = np.sort(rng.uniform(0, 3, n))[:, None]
        y = np.sin(2 * X[:, 0]) + 0.1 * rng.normal(size=n)
        Z = np.sort(rng.choice(X[:, 0], size=m, replace=False))[:, None]
        covs = OnlineCovariances(
            kuu_new=kernel_eval(KERNEL, Z, Z), kfu_new=kernel_eval(KERNEL, X, Z)
        )
        _, elbo = fit_first_task(covs, y, KERNEL, DiracBasisTag(Z=Z))
        lml = exact_log_marginal(kernel_eval(KERNEL, X, X), y, KERNEL.noise_variance)
        assert elbo <= lml + 1e-8


# --- online updates ---------------------------------------------------------


def test_empty_batch_same_basis_returns_old_posterior():
    X, y, Kxx = make_instance(2, n=10)
    covs = OnlineCovariances(kuu_new=Kxx, kfu_new=Kxx)
    q, _ = fit_first_task(covs, y, KERNEL, DiracBasisTag(Z=X))
    covs2 = OnlineCovariances(kuu_new=Kxx, kfu_new=np.zeros((0, 10)), kuu_old=Kxx, cross=Kxx)
    q2, _ = online_update(q, covs2, None, KERNEL, DiracBasisTag(Z=X))
    assert q2 is q


def _streaming_vs_batch(split_points, seed=3):
    X, y, Kxx = make_instance(seed, n=30, spread=5.0)
    Z = X[::3]
    kuu = kernel_eval(KERNEL, Z, Z)
    tag = DiracBasisTag(Z=Z)

    kfu_all = kernel_eval(KERNEL, X, Z)
    q_batch, _ = fit_first_task(OnlineCovariances(kuu_new=kuu, kfu_new=kfu_all), y, KERNEL, tag)

    bounds = [0] + sorted(split_points) + [30]
    q = None
    for i in range(len(bounds) - 1):
        lo, hi = bounds[i], bounds[i + 1]
        kfu = kfu_all[lo:hi]
        if q is None:
            q, _ = fit_first_task(OnlineCovariances(kuu_new=kuu, kfu_new=kfu), y[lo:hi], KERNEL, tag)
        else:
            covs = OnlineCovariances(kuu_new=kuu, kfu_new=kfu, kuu_old=kuu, cross=kuu)
            q, _ = online_update(q, covs, batch_of(y[lo:hi], i), KERNEL, tag)
    return q, q_batch


@settings(max_examples=20, deadline=None)
@given(st.sets(st.integers(1, 29), min_size=1, max_size=4))
def test_streaming_exactness_with_fixed_inducing_set(splits):
    q, q_batch = _streaming_vs_batch(sorted(splits))
    scale_m = max(1.0, np.max(np.abs(q_batch.m_u)))
    scale_S = np.max(np.abs(q_batch.S_u))
    assert np.max(np.abs(q.m_u - q_batch.m_u)) < 1e-6 * scale_m
    assert np.max(np.abs(q.S_u - q_batch.S_u)) < 1e-6 * scale_S


def test_update_beats_keeping_old_posterior():
    X, y, Kxx = make_instance(4, n=24, spread=5.0)
    Z = X[::2]
    kuu = kernel_eval(KERNEL, Z, Z)
    tag = DiracBasisTag(Z=Z)
    kfu_all = kernel_eval(KERNEL, X, Z)
    q1, _ = fit_first_task(OnlineCovariances(kuu_new=kuu, kfu_new=kfu_all[:12]), y[:12], KERNEL, tag)
    covs = OnlineCovariances(kuu_new=kuu, kfu_new=kfu_all[12:], kuu_old=kuu, cross=kuu)
    batch = batch_of(y[12:], 1)
    q2, achieved = online_update(q1, covs, batch, KERNEL, tag)
    embedded = online_elbo(q1, batch, covs, KERNEL, q_old=q1)
    assert achieved >= embedded - 1e-10


def test_degenerate_old_posterior_raises():
    X, y, Kxx = make_instance(5, n=8)
    bad = GaussianPosterior(
        m_u=np.zeros(8), S_u=np.diag([1.0] * 7 + [-1e-3]), basis=DiracBasisTag(Z=X), kernel=KERNEL
    )
    covs = OnlineCovariances(kuu_new=Kxx, kfu_new=Kxx, kuu_old=Kxx, cross=Kxx)
    with pytest.raises(NumericsError, match="degenerate"):
        online_update(bad, covs, batch_of(y), KERNEL, DiracBasisTag(Z=X + 1.0))


# --- objective --------------------------------------------------------------


def test_prior_posterior_has_zero_kl_term():
    X, y, Kxx = make_instance(6, n=10)
    q = GaussianPosterior(m_u=np.zeros(10), S_u=Kxx, basis=DiracBasisTag(Z=X), kernel=KERNEL)
    covs = OnlineCovariances(kuu_new=Kxx, kfu_new=np.zeros((0, 10)))
    assert abs(online_elbo(q, None, covs, KERNEL)) < 1e-8


def test_gaussian_kl_identities():
    S = np.diag([2.0, 3.0])
    assert gaussian_kl(np.ones(2), S, np.ones(2), S) == pytest.approx(0.0, abs=1e-12)
    # analytic: KL(N(m,I) || N(0,I)) = |m|^2/2
    m = np.array([1.0, -2.0])
    assert gaussian_kl(m, np.eye(2), np.zeros(2), np.eye(2)) == pytest.approx(2.5)


def test_first_task_elbo_matches_online_elbo():
    X, y, Kxx = make_instance(7, n=12)
    covs = OnlineCovariances(kuu_new=Kxx, kfu_new=Kxx)
    q, elbo = fit_first_task(covs, y, KERNEL, DiracBasisTag(Z=X))
    assert elbo == pytest.approx(online_elbo(q, batch_of(y), covs, KERNEL), abs=1e-10)


def test_finite_difference_gradient_vanishes_at_optimum():
    X, y, Kxx = make_instance(8, n=14, spread=5.0)
    Z = X[::2]
    kuu = kernel_eval(KERNEL, Z, Z)
    tag = DiracBasisTag(Z=Z)
    kfu_all = kernel_eval(KERNEL, X, Z)
    q1, _ = fit_first_task(OnlineCovariances(kuu_new=kuu, kfu_new=kfu_all[:7]), y[:7], KERNEL, tag)
    covs = OnlineCovariances(kuu_new=kuu, kfu_new=kfu_all[7:], kuu_old=kuu, cross=kuu)
    batch = batch_of(y[7:], 1)
    q2, _ = online_update(q1, covs, batch, KERNEL, tag)
    eps = 1e-5
    grad = np.zeros(q2.order)
    for i in range(q2.order):
        e = np.zeros(q2.order)
        e[i] = eps
        up = GaussianPosterior(m_u=q2.m_u + e, S_u=q2.S_u, basis=tag, kernel=KERNEL)
        dn = GaussianPosterior(m_u=q2.m_u - e, S_u=q2.S_u, basis=tag, kernel=KERNEL)
        grad[i] = (
            online_elbo(up, batch, covs, KERNEL, q_old=q1)
            - online_elbo(dn, batch, covs, KERNEL, q_old=q1)
        ) / (2 * eps)
    assert np.max(np.abs(grad)) < 1e-4


def test_torch_ascent_cannot_beat_closed_form():
    torch = pytest.importorskip("torch")
    from conftest import torch_online_elbo_factory

    X, y, Kxx = make_instance(9, n=16, spread=5.0)
    Z = X[::2]
    kuu = kernel_eval(KERNEL, Z, Z)
    tag = DiracBasisTag(Z=Z)
    kfu_all = kernel_eval(KERNEL, X, Z)
    q1, _ = fit_first_task(OnlineCovariances(kuu_new=kuu, kfu_new=kfu_all[:8]), y[:8], KERNEL, tag)
    covs = OnlineCovariances(kuu_new=kuu, kfu_new=kfu_all[8:], kuu_old=kuu, cross=kuu)
    batch = batch_of(y[8:], 1)
    q2, achieved = online_update(q1, covs, batch, KERNEL, tag)

    objective = torch_online_elbo_factory(covs, y[8:], KERNEL, q1)
    # the torch objective must agree with the reference implementation
    at_opt = objective(torch.tensor(q2.m_u), torch.tensor(np.linalg.cholesky(q2.S_u)))
    assert float(at_opt) == pytest.approx(achieved, abs=1e-9)

    m = torch.tensor(q2.m_u + 0.3, requires_grad=True)
    L = torch.tensor(np.linalg.cholesky(q2.S_u) * 1.2, requires_grad=True)
    opt = torch.optim.Adam([m, L], lr=1e-2)
    for _ in range(800):
        opt.zero_grad()
        loss = -objective(m, torch.tril(L))
        loss.backward()
        opt.step()
    assert achieved >= float(objective(m.detach(), torch.tril(L.detach()))) - 1e-6


# --- natural-parameter carrier ----------------------------------------------


def test_natural_api_matches_moment_api():
    X, y, Kxx = make_instance(10, n=20, spread=5.0)
    Z = X[::2]
    kuu = kernel_eval(KERNEL, Z, Z)
    tag = DiracBasisTag(Z=Z)
    kfu_all = kernel_eval(KERNEL, X, Z)

    covs1 = OnlineCovariances(kuu_new=kuu, kfu_new=kfu_all[:10])
    q_m, _ = fit_first_task(covs1, y[:10], KERNEL, tag)
    nat = natural_first_task(covs1, y[:10], KERNEL, tag)
    q_n = natural_posterior(nat, kuu, KERNEL)
    assert np.max(np.abs(q_n.m_u - q_m.m_u)) < 1e-8
    assert np.max(np.abs(q_n.S_u - q_m.S_u)) < 1e-8

    covs2 = OnlineCovariances(kuu_new=kuu, kfu_new=kfu_all[10:], kuu_old=kuu, cross=kuu)
    batch = batch_of(y[10:], 1)
    q_m2, _ = online_update(q_m, covs2, batch, KERNEL, tag)
    nat2 = natural_update(nat, covs2, batch, KERNEL, tag)
    q_n2 = natural_posterior(nat2, kuu, KERNEL)
    assert np.max(np.abs(q_n2.m_u - q_m2.m_u)) < 1e-7
    assert np.max(np.abs(q_n2.S_u - q_m2.S_u)) < 1e-7


def test_natural_update_requires_cross_block():
    X, y, Kxx = make_instance(11, n=6)
    nat = natural_first_task(OnlineCovariances(kuu_new=Kxx, kfu_new=Kxx), y, KERNEL, DiracBasisTag(Z=X))
    with pytest.raises(StateError, match="cross"):
        natural_update(nat, OnlineCovariances(kuu_new=Kxx, kfu_new=Kxx), batch_of(y), KERNEL, DiracBasisTag(Z=X))


# --- prediction and reconstruction -------------------------------------------


def test_prior_prediction():
    X, _, Kxx = make_instance(12, n=9)
    q = GaussianPosterior(m_u=np.zeros(9), S_u=Kxx, basis=DiracBasisTag(Z=X), kernel=KERNEL)
    mean, var = predict(q, Kxx, Kxx, np.full(9, KERNEL.variance))
    assert np.max(np.abs(mean)) < 1e-10
    assert np.allclose(var, KERNEL.variance, atol=1e-8)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_predictive_variance_bounds(seed):
    rng = np.random.default_rng(seed)
    n, m = 12, 5
    X = np.sort(rng.uniform(0, 4, n))[:, None]
    y = rng.normal(size=n)
    Z = np.sort(rng.choice(X[:, 0], size=m, replace=False))[:, None]
    covs = OnlineCovariances(kuu_new=kernel_eval(KERNEL, Z, Z), kfu_new=kernel_eval(KERNEL, X, Z))
    q, _ = fit_first_task(covs, y, KERNEL, DiracBasisTag(Z=Z))
    stars = rng.uniform(0, 4, 7)[:, None]
    _, var = predict(q, kernel_eval(KERNEL, stars, Z), covs.kuu_new, np.full(7, KERNEL.variance))
    assert np.all(var >= 0)
    assert np.all(var <= KERNEL.variance + 1e-8)


def test_predict_order_mismatch():
    X, _, Kxx = make_instance(13, n=5)
    q = GaussianPosterior(m_u=np.zeros(5), S_u=Kxx, basis=DiracBasisTag(Z=X), kernel=KERNEL)
    with pytest.raises(StateError, match="order"):
        predict(q, np.zeros((2, 4)), Kxx, np.ones(2))


def test_reconstruction_trivial_and_nonnegative():
    M = 6
    kuu = kuu_quadrature(KERNEL, M, 1.0)
    m = np.zeros(M)
    m[0] = 1.0
    q = GaussianPosterior(m_u=m, S_u=np.zeros((M, M)), basis=HippoBasisTag(t=1.0), kernel=KERNEL)
    xs = np.linspace(0.0, 1.0, 40)
    mean, var = reconstruct_posterior(q, xs)
    assert np.allclose(mean, 1.0)
    assert np.allclose(var, 0.0)
    q2 = GaussianPosterior(m_u=m, S_u=kuu, basis=HippoBasisTag(t=1.0), kernel=KERNEL)
    _, var2 = reconstruct_posterior(q2, xs)
    assert np.all(var2 >= 0)


def test_reconstruction_rejects_dirac_basis():
    X, _, Kxx = make_instance(14, n=4)
    q = GaussianPosterior(m_u=np.zeros(4), S_u=Kxx, basis=DiracBasisTag(Z=X), kernel=KERNEL)
    with pytest.raises(ValueError, match="basis"):
        reconstruct_posterior(q, [0.5])


def test_task_batch_validation():
    with pytest.raises(ValueError, match="strictly increasing"):
        TaskBatch(
            inputs=np.zeros((3, 1)),
            targets=np.zeros(3),
            task_index=0,
            t_prev=0.0,
            t_cur=1.0,
            pseudo_times=np.array([0.1, 0.1, 0.2]),
        )
    with pytest.raises(ValueError, match="align"):
        TaskBatch(inputs=np.zeros((3, 1)), targets=np.zeros(2), task_index=0, t_prev=0.0, t_cur=1.0)
