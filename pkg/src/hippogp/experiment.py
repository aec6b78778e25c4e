"""Experiment orchestration: configs, the streaming loop for each method,
metrics, machine-readable reports, and the covariance stability diagnostic.

Time axes. 1D inputs are affinely mapped so that task 1 spans (0, 1] and the
grid step defaults to 1/|task 1|; the LegS recurrence is timescale-equivariant
so the mapping is harmless. Multidimensional inputs are ordered by the
configured sorting criterion and assigned pseudo-times i * dt (dt defaults to
1 per instance); the recurrence is then driven by the ordered inputs through
frequency vectors drawn from the ARD spectral density, so the covariance
blocks remain one self-consistent Monte-Carlo approximation of the kernel.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import __version__
from .baselines import (
    InducingSet,
    dirac_covariances,
    select_inducing_pivchol,
    select_inducing_resample,
)
from .covariance import (
    TimeGrid,
    assemble_kuu,
    evolve_kuu_direct,
    evolve_rff_features,
    kuu_quadrature,
)
from .data import (
    SORT_CRITERIA,
    SYNTHETIC_NAMES,
    Dataset,
    TaskSplit,
    load_series_csv,
    make_synthetic,
    sort_multidim,
    split_tasks,
)
from .kernels import KernelSpec, kernel_eval, spectral_sample, spectral_sample_ard
from .linalg import psd_cholesky
from .posterior import (
    DiracBasisTag,
    HippoBasisTag,
    OnlineCovariances,
    natural_first_task,
    natural_posterior,
    natural_update,
    predict,
)

METHODS = ("ohsgpr", "osgpr-resample", "ovc-pivchol")
METRICS = ("rmse", "nlpd")


@dataclass(frozen=True)
class ExperimentConfig:
    """Flat, JSON-serializable description of one streaming run."""

    csv: str | None = None
    synthetic: str | None = None
    synthetic_params: dict = field(default_factory=dict)
    n_tasks: int = 2
    method: str = "ohsgpr"
    M: int = 20
    n_rff: int = 1000
    dt: float | None = None
    stride: int = 1
    scheme: str = "bilinear"
    seed: int = 0
    sorting: str = "given-order"
    metrics: tuple = ("rmse", "nlpd")
    output: str | None = None

    def __post_init__(self):
        if (self.csv is None) == (self.synthetic is None):
            raise ValueError("exactly one of 'csv' and 'synthetic' must be set")
        if self.synthetic is not None and self.synthetic not in SYNTHETIC_NAMES:
            raise ValueError(f"unknown synthetic dataset {self.synthetic!r}")
        if self.n_tasks < 1:
            raise ValueError(f"n_tasks must be >= 1, got {self.n_tasks}")
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.M < 1:
            raise ValueError(f"M must be >= 1, got {self.M}")
        if self.n_rff < 1:
            raise ValueError(f"n_rff must be >= 1, got {self.n_rff}")
        if self.dt is not None and self.dt <= 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.stride < 1:
            raise ValueError(f"stride must be >= 1, got {self.stride}")
        if self.sorting not in SORT_CRITERIA:
            raise ValueError(f"unknown sorting criterion {self.sorting!r}")
        object.__setattr__(self, "metrics", tuple(self.metrics))
        for m in self.metrics:
            if m not in METRICS:
                raise ValueError(f"unknown metric {m!r}; expected subset of {METRICS}")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
        if not isinstance(d, dict):
            raise ValueError(f"{path}: config must be a flat JSON object")
        return cls.from_dict(d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["metrics"] = list(self.metrics)
        return d


@dataclass
class ResultsReport:
    """Lower-triangular (eval_task, after_task) metric matrix plus metadata."""

    config: dict
    metrics: list  # entries {eval_task, after_task, rmse, nlpd}, 1-based
    timing_seconds: list
    version: str = __version__
    failed_at: int | None = None

    def to_json(self) -> str:
        d = {
            "config": self.config,
            "metrics": self.metrics,
            "timing_seconds": self.timing_seconds,
            "version": self.version,
        }
        if self.failed_at is not None:
            d["failed_at"] = self.failed_at
        return json.dumps(d, sort_keys=True, indent=2)

    def to_csv(self) -> str:
        lines = ["eval_task,after_task,rmse,nlpd"]
        for row in self.metrics:
            lines.append(
                f"{row['eval_task']},{row['after_task']},{row['rmse']!r},{row['nlpd']!r}"
            )
        return "\n".join(lines) + "\n"

    def cell(self, eval_task: int, after_task: int) -> dict:
        for row in self.metrics:
            if row["eval_task"] == eval_task and row["after_task"] == after_task:
                return row
        raise KeyError(f"no metric cell for eval_task={eval_task}, after_task={after_task}")


def metric_rmse(y, yhat) -> float:
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    if y.size == 0 or y.shape != yhat.shape:
        raise ValueError("rmse needs equal-length non-empty arrays")
    return float(np.sqrt(np.mean((y - yhat) ** 2)))


def metric_nlpd(y, means, variances) -> float:
    """Negative mean log Gaussian density of y under per-point mean/variance."""
    y = np.asarray(y, dtype=float)
    means = np.asarray(means, dtype=float)
    variances = np.maximum(np.asarray(variances, dtype=float), 1e-12)
    if y.size == 0 or y.shape != means.shape or y.shape != variances.shape:
        raise ValueError("nlpd needs equal-length non-empty arrays")
    return float(np.mean(0.5 * np.log(2 * np.pi * variances) + 0.5 * (y - means) ** 2 / variances))


# ---------------------------------------------------------------------------
# Hyperparameters: exact GP log marginal likelihood on task 1, maximized by
# derivative-free coordinate search (golden section on the log scale), then
# frozen for the rest of the stream.

_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def gp_log_marginal(kernel: KernelSpec, X, y) -> float:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    K = kernel_eval(kernel, X, X) + kernel.noise_variance * np.eye(y.size)
    L, _ = psd_cholesky(K, "K + noise")
    alpha = np.linalg.solve(L.T, np.linalg.solve(L, y))
    logdet = 2.0 * float(np.sum(np.log(np.diag(L))))
    return float(-0.5 * y @ alpha - 0.5 * logdet - 0.5 * y.size * np.log(2 * np.pi))


def _golden_max(f, lo: float, hi: float, iters: int = 30) -> float:
    a, b = lo, hi
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def fit_hyperparameters(X, y, sweeps: int = 3, half_width: float = 3.0) -> KernelSpec:
    """Fit (variance, lengthscales, noise variance) on one batch of data."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float)
    var_y = max(float(np.var(y)), 1e-8)
    spans = np.maximum(X.max(axis=0) - X.min(axis=0), 1e-8)
    theta = np.log(np.concatenate([[var_y], spans / 10.0, [0.1 * var_y]]))

    def build(th):
        d = X.shape[1]
        return KernelSpec(
            variance=float(np.exp(th[0])),
            lengthscales=tuple(np.exp(th[1 : 1 + d])),
            noise_variance=float(np.exp(th[1 + d])),
        )

    def objective(th):
        try:
            return gp_log_marginal(build(th), X, y)
        except Exception:
            return -np.inf

    for _ in range(sweeps):
        for i in range(theta.size):
            def f(v, i=i):
                th = theta.copy()
                th[i] = v
                return objective(th)

            theta[i] = _golden_max(f, theta[i] - half_width, theta[i] + half_width)
    return build(theta)


# ---------------------------------------------------------------------------
# Stream construction shared across methods.


@dataclass(frozen=True)
class StreamLayout:
    """Everything method-independent about one run: the ordered dataset, the
    task splits, the pseudo-time axis, and the index bookkeeping."""

    splits: list  # list[TaskSplit]
    dt: float
    boundary_ks: np.ndarray  # grid index at the end of each task
    drivers: np.ndarray  # input driving the recurrence at index k (row k-1)
    all_X: np.ndarray  # every point (train and test) in stream order
    train_slices: list  # per task: indices into all_X of the training points
    test_slices: list  # per task: indices into all_X of the test points
    kernel_X: np.ndarray  # task-1 training inputs in working units
    kernel_y: np.ndarray


def build_stream(config: ExperimentConfig) -> StreamLayout:
    if config.csv is not None:
        data = load_series_csv(config.csv)
    else:
        data = make_synthetic(config.synthetic, config.synthetic_params, config.seed)

    if data.dim == 1:
        order = np.argsort(data.X[:, 0], kind="stable")
        X, y = data.X[order], data.y[order]
        x = X[:, 0]
        n = x.size
        n1 = len(np.array_split(np.arange(n), config.n_tasks)[0])
        dt = config.dt if config.dt is not None else 1.0 / n1
        # affine map: first point -> dt, last task-1 point -> n1 * dt
        a, b = x[0], x[n1 - 1]
        scale = (n1 - 1) * dt / (b - a) if b > a else 1.0
        times = dt + (x - a) * scale
        ks = np.round(times / dt).astype(int)
        ks = np.maximum.accumulate(np.maximum(ks, 1))
        ks += np.concatenate([[0], np.cumsum(np.diff(ks) == 0)])  # force distinct indices
        times = ks * dt
        X_work = times[:, None]  # kernel and recurrence share one coordinate
        drivers_fn = None
    else:
        probe = None
        if config.sorting in ("kernel-max", "kernel-min"):
            # the walk needs a kernel before hyperparameters exist; per-axis
            # spans stand in for lengthscales
            spans = np.maximum(data.X.max(axis=0) - data.X.min(axis=0), 1e-8)
            probe = KernelSpec(
                variance=1.0, lengthscales=tuple(spans / 10.0), noise_variance=1.0
            )
        order = sort_multidim(data.X, config.sorting, kernel=probe, seed=config.seed)
        X, y = data.X[order], data.y[order]
        dt = config.dt if config.dt is not None else 1.0
        ks = np.arange(1, len(y) + 1)
        times = ks * dt
        X_work = X

    splits = split_tasks(Dataset(X=X_work, y=y), config.n_tasks, pseudo_times=times)
    bounds = np.cumsum([len(a) for a in np.array_split(np.arange(len(y)), config.n_tasks)])
    boundary_ks = ks[bounds - 1]

    train_slices, test_slices = [], []
    pos = 0
    for s in splits:
        ntr, nte = len(s.train), len(s.test_y)
        local = np.arange(pos, pos + ntr + nte)
        is_test = (np.arange(ntr + nte) + 1) % 10 == 0
        if not is_test.any():
            is_test[-1] = True
        train_slices.append(local[~is_test])
        test_slices.append(local[is_test])
        pos += ntr + nte

    nmax = boundary_ks[-1]
    drivers = np.zeros((nmax, X_work.shape[1]))
    drivers[:] = X_work[0]
    for i in range(len(y)):  # hold the driver at the latest seen input
        drivers[ks[i] - 1 :] = X_work[i]
    if data.dim == 1:
        drivers = (np.arange(1, nmax + 1) * dt)[:, None]

    return StreamLayout(
        splits=splits,
        dt=dt,
        boundary_ks=boundary_ks,
        drivers=drivers,
        all_X=X_work,
        train_slices=train_slices,
        test_slices=test_slices,
        kernel_X=splits[0].train.inputs,
        kernel_y=splits[0].train.targets,
    )


def _grid_between(layout: StreamLayout, k_start: int, k_end: int, stride: int) -> TimeGrid:
    span = k_end - k_start
    stride = max(1, min(stride, span)) if span else 1
    if span % stride:
        stride = 1
    drv = layout.drivers[k_start - 1 : k_end]
    return TimeGrid(dt=layout.dt, k_start=k_start, k_end=k_end, drivers=drv, stride=stride)


def _evaluate(q, after_task, layout, kuu, kfu_rows, kernel, rows):
    """Lower-triangular metric rows for every task seen so far."""
    out = []
    for i in range(after_task + 1):
        idx = layout.test_slices[i]
        kfu_star = kfu_rows(idx)
        kdiag = np.full(idx.size, kernel.variance)
        mean, var = predict(q, kfu_star, kuu, kdiag)
        y = rows[i]
        out.append(
            {
                "eval_task": i + 1,
                "after_task": after_task + 1,
                "rmse": metric_rmse(y, mean),
                "nlpd": metric_nlpd(y, mean, var + kernel.noise_variance),
            }
        )
    return out


def _run_hippo(config: ExperimentConfig, layout: StreamLayout, kernel: KernelSpec, report: "ResultsReport"):
    test_y = [s.test_y for s in layout.splits]
    M, N = config.M, config.n_rff
    one_dim = layout.all_X.shape[1] == 1
    if one_dim:
        freqs = spectral_sample(kernel, N, config.seed)
    else:
        freqs = spectral_sample_ard(kernel, N, config.seed)
    # Cross-covariance rows are taken from the same feature map as K_uu:
    # the row ODE is driven by the N-sample kernel rather than the exact
    # one (the two commute by linearity of the recurrence). Mixing exact
    # rows with a Monte-Carlo K_uu amplifies the sampling error through
    # K_uu^-1 and destabilizes the posterior.
    W = freqs.frequencies.reshape(N, -1)
    phases = layout.all_X @ W.T
    psi = np.concatenate([np.cos(phases), np.sin(phases)], axis=1)

    nat = None
    feat_state = None
    Z_prev = None
    kuu_prev = None
    k_prev = 1
    for j, split in enumerate(layout.splits):
        t0 = time.perf_counter()
        k_j = int(layout.boundary_ks[j])
        grid = _grid_between(layout, k_prev, k_j, config.stride)
        feat_state = evolve_rff_features(freqs, grid, state=feat_state, order=M, scheme=config.scheme)
        kuu_j = assemble_kuu(feat_state.Z, feat_state.Z, kernel.variance, N)
        kfu_all = (kernel.variance / N) * (psi @ feat_state.Z.T)
        kfu_batch = kfu_all[layout.train_slices[j]]
        basis = HippoBasisTag(t=k_j * layout.dt)
        if nat is None:
            covs = OnlineCovariances(kuu_new=kuu_j, kfu_new=kfu_batch)
            nat = natural_first_task(covs, split.train.targets, kernel, basis)
        else:
            cross = assemble_kuu(Z_prev, feat_state.Z, kernel.variance, N)
            covs = OnlineCovariances(
                kuu_new=kuu_j, kfu_new=kfu_batch, kuu_old=kuu_prev, cross=cross
            )
            nat = natural_update(nat, covs, split.train, kernel, basis)
        q = natural_posterior(nat, kuu_j, kernel)
        Z_prev, kuu_prev, k_prev = feat_state.Z, kuu_j, k_j
        report.metrics += _evaluate(q, j, layout, kuu_j, lambda idx: kfu_all[idx], kernel, test_y)
        report.timing_seconds.append(time.perf_counter() - t0)


def _run_dirac(config: ExperimentConfig, layout: StreamLayout, kernel: KernelSpec, report: "ResultsReport"):
    test_y = [s.test_y for s in layout.splits]
    nat = None
    Z = None
    kuu = None
    for j, split in enumerate(layout.splits):
        t0 = time.perf_counter()
        X_new = split.train.inputs
        if config.method == "osgpr-resample":
            Z_new = select_inducing_resample(Z, X_new, config.M, seed=config.seed + j)
        else:
            pool = X_new if Z is None else np.vstack([Z.Z, X_new])
            Z_new = select_inducing_pivchol(kernel, pool, config.M)
        kfu_new, kuu_new = dirac_covariances(kernel, X_new, Z_new)
        basis = DiracBasisTag(Z=Z_new.Z)
        if nat is None:
            covs = OnlineCovariances(kuu_new=kuu_new, kfu_new=kfu_new)
            nat = natural_first_task(covs, split.train.targets, kernel, basis)
        else:
            cross = kernel_eval(kernel, Z.Z, Z_new.Z)
            covs = OnlineCovariances(kuu_new=kuu_new, kfu_new=kfu_new, kuu_old=kuu, cross=cross)
            nat = natural_update(nat, covs, split.train, kernel, basis)
        q = natural_posterior(nat, kuu_new, kernel)
        Z, kuu = Z_new, kuu_new
        report.metrics += _evaluate(
            q,
            j,
            layout,
            kuu,
            lambda idx: kernel_eval(kernel, layout.all_X[idx], Z.Z),
            kernel,
            test_y,
        )
        report.timing_seconds.append(time.perf_counter() - t0)


def run_experiment(config: ExperimentConfig, out_dir: str | None = None) -> ResultsReport:
    """Execute the streaming run described by the config.

    Task 1 also fits the kernel hyperparameters (frozen afterwards). After
    each task the posterior is evaluated on the held-out test points of every
    task seen so far. Reports are written as JSON plus a flat CSV of the
    metric matrix when an output location is configured.
    """
    layout = build_stream(config)
    kernel = fit_hyperparameters(layout.kernel_X, layout.kernel_y)
    report = ResultsReport(config=config.to_dict(), metrics=[], timing_seconds=[])
    try:
        if config.method == "ohsgpr":
            _run_hippo(config, layout, kernel, report)
        else:
            _run_dirac(config, layout, kernel, report)
    except Exception as e:
        report.failed_at = len(report.timing_seconds) + 1
        _write_report(report, config, out_dir)
        raise RuntimeError(f"experiment failed at task {report.failed_at}: {e}") from e
    _write_report(report, config, out_dir)
    return report


def _write_report(report: ResultsReport, config: ExperimentConfig, out_dir: str | None) -> None:
    import os

    path = None
    if out_dir is not None:
        path = os.path.join(out_dir, "report.json")
    elif config.output is not None:
        path = config.output
    if path is None:
        return
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(report.to_json() + "\n")
    with open(path[: -len(".json")] + ".csv" if path.endswith(".json") else path + ".csv", "w") as fh:
        fh.write(report.to_csv())


def stability_report(
    M: int = 8,
    lengthscale: float = 0.3,
    variance: float = 1.0,
    dt: float = 1e-3,
    horizon: float = 5.0,
    n_rff: int = 2000,
    seed: int = 0,
    out_path: str | None = None,
) -> dict:
    """Deviation trajectories of the two K_uu evolution paths against the
    double-quadrature oracle, out to the given horizon.

    The direct matrix-ODE path is expected to drift or blow up well before
    the random-feature path does; the report records what happens rather
    than asserting it.
    """
    kernel = KernelSpec(variance=variance, lengthscales=(lengthscale,), noise_variance=0.1)
    freqs = spectral_sample(kernel, n_rff, seed)
    checkpoints = [round(0.25 * i, 10) for i in range(1, int(horizon / 0.25) + 1)]
    rff_err, direct_err = [], []
    feat = None
    direct = None
    diverged_at = None
    k_prev = 1
    for t in checkpoints:
        k_t = int(round(t / dt))
        grid = TimeGrid.from_times(dt, k_prev, k_t)
        feat = evolve_rff_features(freqs, grid, state=feat, order=M)
        oracle = kuu_quadrature(kernel, M, t)
        denom = float(np.linalg.norm(oracle))
        K_rff = assemble_kuu(feat.Z, feat.Z, variance, n_rff)
        rff_err.append(float(np.linalg.norm(K_rff - oracle)) / denom)
        if diverged_at is None:
            try:
                direct = evolve_kuu_direct(kernel, grid, state=direct, order=M)
                direct_err.append(float(np.linalg.norm(direct.kuu - oracle)) / denom)
            except Exception:
                diverged_at = t
                direct_err.append(float("inf"))
        else:
            direct_err.append(float("inf"))
        k_prev = k_t
    out = {
        "order": M,
        "lengthscale": lengthscale,
        "variance": variance,
        "dt": dt,
        "n_rff": n_rff,
        "seed": seed,
        "checkpoints": checkpoints,
        "rff_rel_error": rff_err,
        "direct_rel_error": [e if np.isfinite(e) else None for e in direct_err],
        "direct_diverged_at": diverged_at,
    }
    if out_path is not None:
        with open(out_path, "w", encoding="utf-8") as fh:
            json.dump(out, fh, sort_keys=True, indent=2)
            fh.write("\n")
    return out
