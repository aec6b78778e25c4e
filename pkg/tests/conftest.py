"""Shared test helpers: acceptance-criterion reporting and the torch objective.

Acceptance tests call :func:`record_criterion`; after the run a one-line
PASS/FAIL verdict per criterion is printed in the terminal summary.
"""

import numpy as np

ACCEPTANCE_RECORDS: list[tuple[int, str, bool, str]] = []


def record_criterion(number: int, title: str, ok: bool, detail: str = "") -> None:
    ACCEPTANCE_RECORDS.append((number, title, ok, detail))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RECORDS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number, title, ok, detail in sorted(ACCEPTANCE_RECORDS):
        verdict = "PASS" if ok else "FAIL"
        line = f"criterion {number:2d} [{verdict}] {title}"
        if detail:
            line += f" ({detail})"
        tr.write_line(line, green=ok, red=not ok)


def torch_online_elbo_factory(covs, y, kernel, q_old):
    """Build a torch-differentiable copy of the streaming objective.

    Independent of the closed-form solver: every term (expected Gaussian
    log-likelihood, prior KL, old-snapshot correction) is re-derived with
    torch linear algebra so gradient ascent can cross-check the stationary
    point. Returns ``objective(m, L)`` with S = L L^T.
    """
    import torch

    td = lambda a: torch.tensor(np.asarray(a, dtype=float))
    K22 = td(covs.kuu_new)
    kfu = td(covs.kfu_new)
    y_t = td(y)
    noise = kernel.noise_variance
    n = y_t.numel()
    A = torch.linalg.solve(K22, kfu.T).T
    cross = td(covs.cross)
    K11 = td(covs.kuu_old)
    P = torch.linalg.solve(K22, cross.T).T
    m_old = td(q_old.m_u)
    S_old = td(q_old.S_u)
    kdiag = torch.full((n,), kernel.variance, dtype=torch.float64)

    def kl(m0, S0, m1, S1):
        d = m0.numel()
        diff = m1 - m0
        sol = torch.linalg.solve(S1, torch.cat([S0, diff[:, None]], dim=1))
        tr = torch.trace(sol[:, :d])
        quad = diff @ sol[:, d]
        logdet1 = torch.linalg.slogdet(S1)[1]
        logdet0 = torch.linalg.slogdet(S0)[1]
        return 0.5 * (tr + quad - d + logdet1 - logdet0)

    def objective(m, L):
        S = L @ L.T
        mean = A @ m
        var = kdiag - torch.einsum("ij,ij->i", A, kfu) + torch.einsum("ij,ij->i", A @ S, A)
        resid = y_t - mean
        value = -0.5 * n * np.log(2 * np.pi * noise) - 0.5 * torch.sum(resid**2 + var) / noise
        value = value - kl(m, S, torch.zeros_like(m), K22)
        m_t = P @ m
        S_t = K11 - P @ cross.T + P @ S @ P.T
        S_t = 0.5 * (S_t + S_t.T)
        value = value + kl(m_t, S_t, torch.zeros_like(m_t), K11)
        value = value - kl(m_t, S_t, m_old, S_old)
        return value

    return objective
