""" Coupled LMN block-term decomposition for hyperspectral/multispectral fusion """

from .degradation import DegradationPreset, DegradationSet, make_degradation
from .metrics import MetricsReport, compute_metrics
from .model import LmnModel, LmnTerm, ModelKind, SemiBlindModel, reconstruct
from .regularization import RegConfig
from .solver import FitReport, SolverConfig, fit, fit_single, initialize
from .synth import SyntheticSpec, generate

__all__ = [
    "DegradationPreset",
    "DegradationSet",
    "FitReport",
    "LmnModel",
    "LmnTerm",
    "MetricsReport",
    "ModelKind",
    "RegConfig",
    "SemiBlindModel",
    "SolverConfig",
    "SyntheticSpec",
    "compute_metrics",
    "fit",
    "fit_single",
    "generate",
    "initialize",
    "make_degradation",
    "reconstruct",
]
