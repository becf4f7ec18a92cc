"""Covariate-specific time-dependent ROC analysis for censored outcomes.

A continuous biomarker and a (possibly censored) event time are modeled
jointly through a Gaussian copula with semiparametric monotone marginal
transformations, yielding closed-form covariate-specific time-dependent
sensitivity, specificity, ROC curves, AUCs, and optimal thresholds.
"""

from .bernstein import BernsteinBasis, MonotoneTransform
from .diagnostics import (
    pit_biomarker_conditional,
    pit_event_time,
    pit_summary,
    qq_uniform,
)
from .exceptions import (
    ConvergenceError,
    DataError,
    NpbError,
    NumericError,
    SingularHessianError,
)
from .joint import (
    Dependence,
    FitConfig,
    FitResult,
    NpbModel,
    Observation,
    ObservationFrame,
    confidence_intervals,
    fit,
    lambda_to_rho,
    rho_to_lambda,
    sample_models,
)
from .margins import KaplanMeier, MarginalModel, fit_marginal, kaplan_meier
from .roc import (
    RocCurve,
    YoudenResult,
    auc,
    conditional_survival_given_marker_range,
    cumulative_sensitivity,
    dynamic_specificity,
    incident_sensitivity,
    incident_static_roc,
    roc_curve,
    youden,
)
from .serialize import FORMAT_VERSION, load_model, save_model
from .sim import (
    DgpConfig,
    empirical_baseline_roc,
    generate_dataset,
    misspecification_scenario,
    rise,
    run_benchmark,
    run_benchmark_from_manifest,
    true_auc,
    true_roc,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "BernsteinBasis",
    "MonotoneTransform",
    "ConvergenceError",
    "DataError",
    "NpbError",
    "NumericError",
    "SingularHessianError",
    "Dependence",
    "FitConfig",
    "FitResult",
    "NpbModel",
    "Observation",
    "ObservationFrame",
    "confidence_intervals",
    "fit",
    "lambda_to_rho",
    "rho_to_lambda",
    "sample_models",
    "KaplanMeier",
    "MarginalModel",
    "fit_marginal",
    "kaplan_meier",
    "RocCurve",
    "YoudenResult",
    "auc",
    "conditional_survival_given_marker_range",
    "cumulative_sensitivity",
    "dynamic_specificity",
    "incident_sensitivity",
    "incident_static_roc",
    "roc_curve",
    "youden",
    "pit_biomarker_conditional",
    "pit_event_time",
    "pit_summary",
    "qq_uniform",
    "FORMAT_VERSION",
    "load_model",
    "save_model",
    "DgpConfig",
    "empirical_baseline_roc",
    "generate_dataset",
    "misspecification_scenario",
    "rise",
    "run_benchmark",
    "run_benchmark_from_manifest",
    "true_auc",
    "true_roc",
]
