"""Lyapunov spectra of linear flows on real flag manifolds."""

from .errors import FlagspecError, InputError, NumericalError
from .flagman import (
    ChartPoint,
    FlagPoint,
    MorseComponent,
    act,
    chart_point,
    distance_to_component,
    flag_distance,
    linearize,
    morse_component,
    nearest_component_point,
    surrogate_distance,
)
from .jordan import Flow, HyperbolicType, JordanTriple, SortedFlow, hyperbolic_type, is_conformal, jordan, sorted_flow
from .roots import (
    Equivariance,
    FlagType,
    SpectrumPrediction,
    WeylWord,
    equivariance_condition,
    flag_spectrum,
    l_roots,
    predicted_spectrum,
    sample_stable_layer,
)
from .spectra import (
    ExponentEstimate,
    Status,
    VerificationReport,
    lyapunov_adjoint,
    metric_exponent,
    nilpotent_ratio_check,
    verify_spectrum,
)

__version__ = "0.1.0"

__all__ = [
    "ChartPoint",
    "Equivariance",
    "ExponentEstimate",
    "FlagPoint",
    "FlagType",
    "FlagspecError",
    "Flow",
    "HyperbolicType",
    "InputError",
    "JordanTriple",
    "MorseComponent",
    "NumericalError",
    "SortedFlow",
    "SpectrumPrediction",
    "Status",
    "VerificationReport",
    "WeylWord",
    "act",
    "chart_point",
    "distance_to_component",
    "equivariance_condition",
    "flag_distance",
    "flag_spectrum",
    "hyperbolic_type",
    "is_conformal",
    "jordan",
    "l_roots",
    "linearize",
    "lyapunov_adjoint",
    "metric_exponent",
    "morse_component",
    "nearest_component_point",
    "nilpotent_ratio_check",
    "predicted_spectrum",
    "sample_stable_layer",
    "sorted_flow",
    "surrogate_distance",
    "verify_spectrum",
]
