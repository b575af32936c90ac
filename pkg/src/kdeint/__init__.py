"""Integral approximation from an i.i.d. sample by weighting integrand values
with leave-one-out kernel density estimates."""

from .bandwidth import BandwidthGrid, TestFunction, build_test_function, rule_of_thumb_h0, select_bandwidth
from .density import LooDensity, Sample, loo_density, mixture_eval
from .errors import KdeintError
from .estimators import (
    EstimateReport,
    FunctionalT,
    Integrand,
    estimate_corrected,
    estimate_general_functional,
    estimate_mc_baseline,
    estimate_plain,
    estimate_regression_functional,
    estimate_trimmed,
)
from .kernels import Kernel, check_moments, compute_boundary_constant, compute_VK, epanechnikov_kernel, radial_order3_kernel

__version__ = "0.1.0"

__all__ = [
    "BandwidthGrid",
    "EstimateReport",
    "FunctionalT",
    "Integrand",
    "Kernel",
    "KdeintError",
    "LooDensity",
    "Sample",
    "TestFunction",
    "build_test_function",
    "check_moments",
    "compute_VK",
    "compute_boundary_constant",
    "epanechnikov_kernel",
    "estimate_corrected",
    "estimate_general_functional",
    "estimate_mc_baseline",
    "estimate_plain",
    "estimate_regression_functional",
    "estimate_trimmed",
    "loo_density",
    "mixture_eval",
    "radial_order3_kernel",
    "rule_of_thumb_h0",
    "select_bandwidth",
]
