"""Command-line entry points: run experiments, run the oracle checks, and
emit the covariance stability diagnostic."""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from . import __version__
from .covariance import TimeGrid, assemble_kuu, evolve_kfu, kfu_quadrature, kuu_quadrature
from .experiment import ExperimentConfig, run_experiment, stability_report
from .hippo import HippoOperator, evolve_coefficients, legs_basis_eval
from .kernels import KernelSpec, kernel_eval, spectral_sample
from .covariance import evolve_rff_features
from .linalg import psd_solve
from .posterior import DiracBasisTag, OnlineCovariances, fit_first_task, predict
from .quadrature import gauss_legendre_nodes


def _oracle_checks():
    """Independent-oracle verification of the covariance machinery.

    Yields (name, passed, detail) triples; every expected value comes from
    quadrature, an exact dense GP, or brute force — never from the code under
    test.
    """
    # Basis orthonormality under the scaled uniform measure, by quadrature.
    worst = 0.0
    for t in (0.5, 1.0, 7.3):
        xs, ws = gauss_legendre_nodes(0.0, t, 256)
        G = legs_basis_eval(16, t, xs)
        gram = (G * ws[:, None]).T @ G / t
        worst = max(worst, float(np.max(np.abs(gram - np.eye(16)))))
    yield "basis-orthonormality", worst < 1e-8, f"max deviation {worst:.3e}"

    # Coefficient recurrence against direct quadrature of the projection.
    dt, M = 1e-3, 16
    ts = np.arange(1, 1001) * dt
    sig = np.sin(2 * np.pi * ts)
    op = HippoOperator.legs(M, dt, "bilinear")
    state = evolve_coefficients(op, sig)
    xs, ws = gauss_legendre_nodes(0.0, 1.0, 512)
    c_ref = (legs_basis_eval(M, 1.0, xs) * ws[:, None]).T @ np.sin(2 * np.pi * xs) / 1.0
    err = float(np.max(np.abs(state.c - c_ref)))
    yield "coefficient-evolution", err < 1e-2, f"sup error {err:.3e}"

    # K_fu rows against the quadrature oracle.
    kernel = KernelSpec(variance=1.0, lengthscales=(0.2,), noise_variance=0.1)
    pts = np.linspace(0.05, 0.95, 20)[:, None]
    grid = TimeGrid.from_times(dt, 1, 1000)
    st = evolve_kfu(kernel, pts, grid, order=M)
    ref = kfu_quadrature(kernel, pts, M, 1.0)
    rel = float(np.linalg.norm(st.kfu - ref) / np.linalg.norm(ref))
    yield "kfu-evolution", rel < 1e-2, f"relative Frobenius {rel:.3e}"

    # Random-feature K_uu against the double-quadrature oracle.
    k2 = KernelSpec(variance=1.0, lengthscales=(0.3,), noise_variance=0.1)
    freqs = spectral_sample(k2, 4000, 0)
    feat = evolve_rff_features(freqs, TimeGrid.from_times(dt, 1, 1000), order=8)
    K = assemble_kuu(feat.Z, feat.Z, 1.0, 4000)
    ref = kuu_quadrature(k2, 8, 1.0)
    med = float(np.median(np.abs(K - ref)))
    yield "kuu-random-features", med < 5e-2, f"median abs error {med:.3e}"

    # Inducing points at every datum reproduce the exact dense GP posterior.
    rng = np.random.default_rng(3)
    X = np.sort(rng.uniform(0, 4, 20))[:, None]
    y = np.sin(X[:, 0]) + 0.05 * rng.normal(size=20)
    k3 = KernelSpec(variance=1.0, lengthscales=(0.3,), noise_variance=0.1)
    Kxx = kernel_eval(k3, X, X)
    covs = OnlineCovariances(kuu_new=Kxx, kfu_new=Kxx)
    q, _ = fit_first_task(covs, y, k3, DiracBasisTag(Z=X))
    mean, _ = predict(q, Kxx, Kxx, np.full(20, 1.0))
    exact = Kxx @ psd_solve(Kxx + 0.1 * np.eye(20), y, "dense GP").x
    err = float(np.max(np.abs(mean - exact)))
    yield "dense-gp-exactness", err < 1e-8, f"sup error {err:.3e}"


def _cmd_run(args) -> int:
    config = ExperimentConfig.from_json(args.config)
    if args.seed is not None:
        config = dataclasses.replace(config, seed=args.seed)
    if args.method is not None:
        config = dataclasses.replace(config, method=args.method)
    report = run_experiment(config, out_dir=args.out)
    if args.out is None and config.output is None:
        print(report.to_json())
    else:
        where = args.out or os.path.dirname(config.output) or "."
        print(f"wrote report for method={config.method} to {where}")
    return 0


def _cmd_oracle(args) -> int:
    failures = 0
    for name, ok, detail in _oracle_checks():
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
        failures += 0 if ok else 1
    return 1 if failures else 0


def _cmd_stability(args) -> int:
    out_path = None
    if args.out is not None:
        os.makedirs(args.out, exist_ok=True)
        out_path = os.path.join(args.out, "stability_report.json")
    rep = stability_report(dt=args.dt, horizon=args.horizon, out_path=out_path)
    if out_path is None:
        print(json.dumps(rep, sort_keys=True, indent=2))
    else:
        print(f"wrote {out_path}")
    if rep["direct_diverged_at"] is not None:
        print(f"direct-ODE path diverged at t={rep['direct_diverged_at']}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="hippogp",
        description="Streaming sparse GP regression with polynomial-projection inducing variables.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a streaming experiment from a JSON config")
    p_run.add_argument("--config", required=True, help="path to the JSON config")
    p_run.add_argument("--out", default=None, help="directory for report.json / report.csv")
    p_run.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_run.add_argument("--method", default=None, help="override the config method")
    p_run.set_defaults(func=_cmd_run)

    p_or = sub.add_parser("oracle", help="run the quadrature / dense-GP oracle checks")
    p_or.set_defaults(func=_cmd_oracle)

    p_st = sub.add_parser(
        "stability-report", help="compare direct-ODE and random-feature K_uu against quadrature"
    )
    p_st.add_argument("--out", default=None, help="directory for stability_report.json")
    p_st.add_argument("--dt", type=float, default=1e-3)
    p_st.add_argument("--horizon", type=float, default=5.0)
    p_st.set_defaults(func=_cmd_stability)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
