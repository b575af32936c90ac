"""Integral estimators built on leave-one-out density estimates.

All estimators have the form ``n^-1 sum_i w_i / fhat_i`` for some per-point
numerator ``w_i``; they differ in the numerator, an optional correction
factor ``1 - vhat_i / fhat_i^2`` and optional trimming of small ``fhat_i``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from .density import LooDensity, Sample, as_sample, loo_density
from .errors import DegenerateDensityError, EmptySumError, MissingResponsesError, ParameterError
from .kernels import Kernel

# Absolute floor below which a leave-one-out density is treated as degenerate.
DENSITY_FLOOR = 1e-12

VARIANTS = (
    "plain",
    "corrected",
    "trimmed-plain",
    "trimmed-corrected",
    "monte-carlo",
    "general-functional",
    "regression",
)


@dataclass(frozen=True)
class Integrand:
    """A function ``phi: R^d -> R`` to integrate.

    ``evaluate`` takes an ``(n, d)`` array and returns ``n`` values. ``box``
    optionally bounds the support as ``(lower, upper)`` corner arrays;
    ``smoothness`` is the declared Nikolski order, used only by the
    bandwidth-window checks; ``integral`` is the exact integral when known.
    """

    evaluate: Callable[[np.ndarray], np.ndarray]
    name: str = "custom"
    box: tuple | None = None
    smoothness: float | None = None
    integral: float | None = None

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        return np.asarray(self.evaluate(x), dtype=float).reshape(-1)


@dataclass(frozen=True)
class FunctionalT:
    """A map ``T(x, y)`` with ``x`` of shape ``(n, d)`` and ``y`` of shape ``(n,)``."""

    evaluate: Callable[[np.ndarray, np.ndarray], np.ndarray]
    name: str = "custom"

    def __call__(self, x, y) -> np.ndarray:
        return np.asarray(self.evaluate(x, y), dtype=float).reshape(-1)


@dataclass(frozen=True)
class EstimateReport:
    value: float
    variant: str
    h: float | None
    n: int
    n_used: int
    min_fhat: float | None
    trim_threshold: float | None = None
    max_correction: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def _as_integrand(phi) -> Integrand:
    return phi if isinstance(phi, Integrand) else Integrand(phi)


def _weighted_sum(numer: np.ndarray, fhat: np.ndarray, keep: np.ndarray, factor=None) -> float:
    """``sum_{i in keep, numer_i != 0} numer_i / fhat_i * factor_i``, exactly rounded.

    ``math.fsum`` makes the value independent of the summation order.
    """
    contributing = keep & (numer != 0.0)
    bad = np.flatnonzero(contributing & (fhat <= DENSITY_FLOOR))
    if bad.size:
        i = bad[0]
        raise DegenerateDensityError(i, fhat[i], DENSITY_FLOOR)
    idx = np.flatnonzero(contributing)
    terms = numer[idx] / fhat[idx]
    if factor is not None:
        terms = terms * factor[idx]
    return math.fsum(terms.tolist())


def _loo(s, k, h, with_variance, loo):
    if loo is not None:
        if loo.n != s.n or (with_variance and loo.vhat is None):
            raise ParameterError("precomputed leave-one-out density does not fit this request")
        return loo
    return loo_density(s, k, h, with_variance=with_variance)


def _correction(loo: LooDensity) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        return 1.0 - loo.vhat / loo.fhat**2


def _max_ratio(loo, mask):
    idx = np.flatnonzero(mask & (loo.fhat > DENSITY_FLOOR))
    if idx.size == 0:
        return None
    return float(np.max(loo.vhat[idx] / loo.fhat[idx] ** 2))


def estimate_from_numerators(numer, loo: LooDensity, variant: str, corrected: bool = False, b: float | None = None) -> EstimateReport:
    """Shared core: combine per-point numerators with a leave-one-out density."""
    numer = np.asarray(numer, dtype=float)
    n = loo.n
    keep = np.ones(n, dtype=bool) if b is None else loo.fhat > b
    n_used = int(keep.sum())
    if b is not None and n_used == 0:
        raise EmptySumError(f"all {n} terms trimmed at threshold b = {b:g}")
    factor = _correction(loo) if corrected else None
    value = _weighted_sum(numer, loo.fhat, keep, factor) / n
    return EstimateReport(
        value=value,
        variant=variant,
        h=loo.h,
        n=n,
        n_used=n_used,
        min_fhat=loo.min_fhat,
        trim_threshold=b,
        max_correction=_max_ratio(loo, keep & (numer != 0.0)) if corrected else None,
    )


def estimate_plain(s, phi, k: Kernel, h: float, *, loo: LooDensity | None = None) -> EstimateReport:
    """``n^-1 sum_i phi(X_i) / fhat_i``.

    Terms with ``phi(X_i) == 0`` contribute nothing whatever ``fhat_i`` is.

    Raises
    ------
    DegenerateDensityError
        If some ``fhat_i <= 1e-12`` where ``phi(X_i) != 0``.
    """
    s = as_sample(s)
    loo = _loo(s, k, h, False, loo)
    return estimate_from_numerators(_as_integrand(phi)(s.points), loo, "plain")


def estimate_corrected(s, phi, k: Kernel, h: float, *, loo: LooDensity | None = None) -> EstimateReport:
    """``n^-1 sum_i phi(X_i) / fhat_i * (1 - vhat_i / fhat_i^2)``.

    The correction factor is not clamped. ``max_correction`` in the report is
    the largest ``vhat_i / fhat_i^2`` over contributing points.
    """
    s = as_sample(s)
    loo = _loo(s, k, h, True, loo)
    return estimate_from_numerators(_as_integrand(phi)(s.points), loo, "corrected", corrected=True)


def estimate_trimmed(s, phi, k: Kernel, h: float, b: float, corrected: bool = False, *, loo: LooDensity | None = None) -> EstimateReport:
    """Plain or corrected estimator restricted to points with ``fhat_i > b``.

    The divisor stays ``n``; ``n_used`` counts the kept points.
    """
    if not b >= 0:
        raise ParameterError(f"trim threshold must be >= 0, got {b}")
    s = as_sample(s)
    loo = _loo(s, k, h, corrected, loo)
    variant = "trimmed-corrected" if corrected else "trimmed-plain"
    return estimate_from_numerators(_as_integrand(phi)(s.points), loo, variant, corrected=corrected, b=float(b))


def estimate_mc_baseline(s, phi, f_true: Callable[[np.ndarray], np.ndarray]) -> EstimateReport:
    """Importance-sampling baseline ``n^-1 sum_i phi(X_i) / f(X_i)`` with the true density."""
    s = as_sample(s)
    numer = _as_integrand(phi)(s.points)
    dens = np.asarray(f_true(s.points), dtype=float).reshape(-1)
    contributing = numer != 0.0
    bad = np.flatnonzero(contributing & (dens <= 0.0))
    if bad.size:
        raise DegenerateDensityError(bad[0], dens[bad[0]], 0.0)
    idx = np.flatnonzero(contributing)
    value = math.fsum((numer[idx] / dens[idx]).tolist()) / s.n
    return EstimateReport(value, "monte-carlo", None, s.n, s.n, None)


def estimate_general_functional(s, t, k: Kernel, h: float, *, loo: LooDensity | None = None) -> EstimateReport:
    """``n^-1 sum_i T(X_i, fhat_i) / fhat_i`` for a functional ``int T(x, f(x)) dx``."""
    s = as_sample(s)
    loo = _loo(s, k, h, False, loo)
    t = t if isinstance(t, FunctionalT) else FunctionalT(t)
    return estimate_from_numerators(t(s.points, loo.fhat), loo, "general-functional")


def estimate_regression_functional(s: Sample, psi, k: Kernel, h: float, *, loo: LooDensity | None = None) -> EstimateReport:
    """``n^-1 sum_i Y_i psi(X_i) / fhat_i``, estimating ``int g psi`` when ``E[Y|X] = g(X)``."""
    s = as_sample(s)
    if s.responses is None:
        raise MissingResponsesError("regression functional needs responses")
    loo = _loo(s, k, h, False, loo)
    numer = s.responses * _as_integrand(psi)(s.points)
    return estimate_from_numerators(numer, loo, "regression")
