"""Dataset ingestion, synthetic generators, task construction, and
pseudo-time ordering for multidimensional inputs."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .kernels import KernelSpec, kernel_eval
from .posterior import TaskBatch

SYNTHETIC_NAMES = ("sine-mix", "piecewise-trend")
SORT_CRITERIA = (
    "given-order",
    "first-dimension",
    "l2-origin",
    "kernel-max",
    "kernel-min",
    "random",
)


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray  # (n, d)
    y: np.ndarray  # (n,)

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        y = np.asarray(self.y, dtype=float)
        if y.shape != (X.shape[0],):
            raise ValueError("targets must align with inputs")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    def __len__(self) -> int:
        return self.y.size

    @property
    def dim(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class TaskSplit:
    """Train batch plus the held-out test points of one task."""

    train: TaskBatch
    test_X: np.ndarray
    test_y: np.ndarray


def load_series_csv(path) -> Dataset:
    """Read a dataset with header ``x0[,x1,...],y`` in file order."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        dim = len(header) - 1
        expected = [f"x{i}" for i in range(dim)] + ["y"]
        if dim < 1 or header != expected:
            raise ValueError(f"{path}: header must be 'x0[,x1,...],y', got {header}")
        X, y = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != dim + 1:
                raise ValueError(f"{path}: line {lineno}: expected {dim + 1} fields, got {len(row)}")
            try:
                vals = [float(v) for v in row]
            except ValueError:
                raise ValueError(f"{path}: line {lineno}: could not parse row {row}") from None
            if not all(np.isfinite(vals)):
                raise ValueError(f"{path}: line {lineno}: non-finite value")
            X.append(vals[:dim])
            y.append(vals[dim])
    if not y:
        raise ValueError(f"{path}: no data rows")
    return Dataset(X=np.asarray(X), y=np.asarray(y))


def save_series_csv(path, dataset: Dataset) -> None:
    """Write a dataset in the same format; float repr round-trips bit-exactly."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{i}" for i in range(dataset.dim)] + ["y"])
        for xi, yi in zip(dataset.X, dataset.y):
            writer.writerow([repr(float(v)) for v in xi] + [repr(float(yi))])


def make_synthetic(name: str, params: dict | None, seed: int) -> Dataset:
    """Deterministic synthetic series.

    sine-mix: y = sum_j a_j sin(2 pi f_j x + phi_j) + Gaussian noise on a
    uniform grid over [0, span]. piecewise-trend: a few linear segments with
    independent slopes plus noise.
    """
    params = dict(params or {})
    rng = np.random.default_rng(seed)
    n = int(params.pop("n_points", 500))
    span = float(params.pop("span", 1.0))
    noise = float(params.pop("noise_std", 0.1))
    x = np.linspace(0.0, span, n)
    if name == "sine-mix":
        amps = np.asarray(params.pop("amplitudes", [1.0, 0.5]), dtype=float)
        freqs = np.asarray(params.pop("frequencies", [1.0, 3.0]), dtype=float)
        phases = params.pop("phases", None)
        if phases is None:
            phases = rng.uniform(0, 2 * np.pi, size=amps.size)
        phases = np.asarray(phases, dtype=float)
        if not (amps.size == freqs.size == phases.size):
            raise ValueError("amplitudes, frequencies, and phases must have equal length")
        y = sum(a * np.sin(2 * np.pi * f * x + p) for a, f, p in zip(amps, freqs, phases))
    elif name == "piecewise-trend":
        pieces = int(params.pop("pieces", 4))
        slopes = rng.uniform(-2.0, 2.0, size=pieces)
        edges = np.linspace(0.0, span, pieces + 1)
        y = np.zeros(n)
        level = 0.0
        for j in range(pieces):
            mask = (x >= edges[j]) & (x <= edges[j + 1] if j == pieces - 1 else x < edges[j + 1])
            y[mask] = level + slopes[j] * (x[mask] - edges[j])
            level += slopes[j] * (edges[j + 1] - edges[j])
    else:
        raise ValueError(f"unknown synthetic dataset {name!r}; expected one of {SYNTHETIC_NAMES}")
    if params:
        raise ValueError(f"unknown synthetic parameters: {sorted(params)}")
    y = y + rng.normal(0.0, noise, size=n)
    return Dataset(X=x[:, None], y=y)


def split_tasks(dataset: Dataset, T: int, pseudo_times: np.ndarray | None = None) -> list[TaskSplit]:
    """Split an ordered dataset into T contiguous tasks of near-equal size.

    Sizes differ by at most one (the remainder goes to the earliest tasks).
    Within each task every 10th point is held out for testing; a task shorter
    than 10 points contributes its last point.
    """
    n = len(dataset)
    if T < 1:
        raise ValueError(f"need at least one task, got {T}")
    if n < T:
        raise ValueError(f"{n} points cannot form {T} tasks")
    if pseudo_times is None:
        pseudo_times = np.arange(1, n + 1, dtype=float)
    pseudo_times = np.asarray(pseudo_times, dtype=float)
    bounds = np.cumsum([0] + [len(a) for a in np.array_split(np.arange(n), T)])
    splits: list[TaskSplit] = []
    t_prev = 0.0
    for j in range(T):
        lo, hi = bounds[j], bounds[j + 1]
        local = np.arange(lo, hi)
        is_test = (np.arange(local.size) + 1) % 10 == 0
        if not is_test.any():
            is_test[-1] = True
        if is_test.all():
            raise ValueError(f"task {j + 1} has no training points")
        train_idx, test_idx = local[~is_test], local[is_test]
        t_cur = float(pseudo_times[hi - 1])
        batch = TaskBatch(
            inputs=dataset.X[train_idx],
            targets=dataset.y[train_idx],
            task_index=j,
            t_prev=t_prev,
            t_cur=t_cur,
            pseudo_times=pseudo_times[train_idx],
        )
        splits.append(TaskSplit(train=batch, test_X=dataset.X[test_idx], test_y=dataset.y[test_idx]))
        t_prev = t_cur
    return splits


def sort_multidim(X, criterion: str, kernel: KernelSpec | None = None, seed: int = 0) -> np.ndarray:
    """Permutation assigning a pseudo-time order to multidimensional inputs.

    kernel-max greedily walks to the most similar unvisited point starting
    from the point most similar to the origin; kernel-min is the same walk
    with the comparator flipped (a deliberately memory-hostile order). Ties
    break toward the lowest original index.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n = X.shape[0]
    if criterion == "given-order":
        return np.arange(n)
    if criterion == "first-dimension":
        return np.argsort(X[:, 0], kind="stable")
    if criterion == "l2-origin":
        return np.argsort(np.linalg.norm(X, axis=1), kind="stable")
    if criterion == "random":
        return np.random.default_rng(seed).permutation(n)
    if criterion in ("kernel-max", "kernel-min"):
        if kernel is None:
            raise ValueError(f"criterion {criterion!r} requires a kernel")
        sign = 1.0 if criterion == "kernel-max" else -1.0
        K = kernel_eval(kernel, X, X)
        k0 = kernel_eval(kernel, X, np.zeros((1, X.shape[1])))[:, 0]
        order = np.empty(n, dtype=int)
        remaining = np.ones(n, dtype=bool)
        cur = int(np.argmax(sign * k0))
        order[0] = cur
        remaining[cur] = False
        for i in range(1, n):
            scores = np.where(remaining, sign * K[cur], -np.inf)
            cur = int(np.argmax(scores))
            order[i] = cur
            remaining[cur] = False
        return order
    raise ValueError(f"unknown sorting criterion {criterion!r}; expected one of {SORT_CRITERIA}")
