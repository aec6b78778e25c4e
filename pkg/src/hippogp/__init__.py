"""Streaming sparse Gaussian-process regression with orthogonal-polynomial
memory: LegS-projected interdomain inducing variables evolved by ODE
recurrences, plus standard inducing-point baselines sharing one update core."""

__version__ = "0.1.0"

from .errors import NumericsError, StateError
from .kernels import KernelSpec, SpectralSample, kernel_eval, spectral_sample
from .hippo import HippoOperator, CoefficientState, evolve_coefficients, reconstruct_signal
from .covariance import TimeGrid, CovarianceState, evolve_kfu, evolve_rff_features, assemble_kuu
from .posterior import (
    GaussianPosterior,
    TaskBatch,
    OnlineCovariances,
    HippoBasisTag,
    DiracBasisTag,
    NaturalUpdateState,
    fit_first_task,
    online_update,
    online_elbo,
    natural_first_task,
    natural_update,
    natural_posterior,
    predict,
    reconstruct_posterior,
)
from .baselines import InducingSet, dirac_covariances
from .data import Dataset, load_series_csv, make_synthetic, split_tasks, sort_multidim
from .experiment import (
    ExperimentConfig,
    ResultsReport,
    run_experiment,
    stability_report,
    metric_rmse,
    metric_nlpd,
    fit_hyperparameters,
)

__all__ = [
    "__version__",
    "NumericsError",
    "StateError",
    "KernelSpec",
    "SpectralSample",
    "kernel_eval",
    "spectral_sample",
    "HippoOperator",
    "CoefficientState",
    "evolve_coefficients",
    "reconstruct_signal",
    "TimeGrid",
    "CovarianceState",
    "evolve_kfu",
    "evolve_rff_features",
    "assemble_kuu",
    "GaussianPosterior",
    "TaskBatch",
    "OnlineCovariances",
    "HippoBasisTag",
    "DiracBasisTag",
    "NaturalUpdateState",
    "fit_first_task",
    "online_update",
    "online_elbo",
    "natural_first_task",
    "natural_update",
    "natural_posterior",
    "predict",
    "reconstruct_posterior",
    "InducingSet",
    "dirac_covariances",
    "Dataset",
    "load_series_csv",
    "make_synthetic",
    "split_tasks",
    "sort_multidim",
    "ExperimentConfig",
    "ResultsReport",
    "run_experiment",
    "stability_report",
    "metric_rmse",
    "metric_nlpd",
    "fit_hyperparameters",
]
