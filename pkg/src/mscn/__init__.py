"""Mixtures of multiple scaled contaminated normal (MSCN) distributions."""

from .distributions import McnParams, MscnParams, mscn_logpdf, mscn_sample, rotation_matrix
from .estimation import FitConfig, FitState, fit, fit_gaussian_baseline
from .evaluation import adjusted_rand, error_rate, outlier_confusion
from .mixtures import ClassificationReport, MixtureModel, classify, observed_loglik

__version__ = "0.1.0"

__all__ = [
    "ClassificationReport",
    "FitConfig",
    "FitState",
    "McnParams",
    "MixtureModel",
    "MscnParams",
    "adjusted_rand",
    "classify",
    "error_rate",
    "fit",
    "fit_gaussian_baseline",
    "mscn_logpdf",
    "mscn_sample",
    "observed_loglik",
    "outlier_confusion",
    "rotation_matrix",
]
