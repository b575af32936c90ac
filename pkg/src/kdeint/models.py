"""Simulation designs, test integrands and the named-integrand registry."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .density import Sample, mixture_eval
from .errors import InputError, ParameterError, ParseError
from .estimators import FunctionalT, Integrand
from .kernels import get_kernel


def stream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for ``(seed, key...)``; the same key always
    yields the same stream, whatever order streams are created in."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key)))


# --------------------------------------------------------------------------
# designs


def sample_model1(n: int, d: int, rng: np.random.Generator) -> Sample:
    """``n`` draws of ``N(1/2, I/4)`` in ``R^d``."""
    return Sample(rng.normal(0.5, 0.5, size=(n, d)))


def model1_density(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    z = (x - 0.5) / 0.5
    return np.prod(np.exp(-0.5 * z * z) / (0.5 * math.sqrt(2 * math.pi)), axis=1)


def sample_model2(n: int, d: int, rng: np.random.Generator) -> Sample:
    """``n`` draws uniform on ``[0, 1]^d``."""
    return Sample(rng.random((n, d)))


def model2_density(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    return np.all((x >= 0.0) & (x <= 1.0), axis=1).astype(float)


@dataclass(frozen=True)
class DesignModel:
    name: str
    sample: Callable[[int, int, np.random.Generator], Sample]
    density: Callable[[np.ndarray], np.ndarray]
    # density of one coordinate; every shipped design is a product
    marginal: Callable[[float], float]
    unit_cube_support: bool
    component_std: float


MODELS = {
    "model1": DesignModel(
        "model1",
        sample_model1,
        model1_density,
        lambda t: math.exp(-2.0 * (t - 0.5) ** 2) / (0.5 * math.sqrt(2 * math.pi)),
        False,
        0.5,
    ),
    "model2": DesignModel(
        "model2",
        sample_model2,
        model2_density,
        lambda t: 1.0 if 0.0 <= t <= 1.0 else 0.0,
        True,
        math.sqrt(1 / 12),
    ),
}


def get_model(name: str) -> DesignModel:
    try:
        return MODELS[name]
    except KeyError:
        raise ParameterError(f"unknown model {name!r}; choose from {sorted(MODELS)}") from None


# --------------------------------------------------------------------------
# integrands


def phi_sinprod(d: int) -> Integrand:
    """``prod_k 2 sin(pi x_k)^2 1{0 <= x_k <= 1}``; integral 1 in every dimension."""

    def evaluate(x):
        inside = np.all((x >= 0.0) & (x <= 1.0), axis=1)
        return np.where(inside, np.prod(2.0 * np.sin(np.pi * x) ** 2, axis=1), 0.0)

    return Integrand(evaluate, "sinprod", (np.zeros(d), np.ones(d)), smoothness=2.5, integral=1.0)


def phi_sinprod_1d(t: float) -> float:
    return 2.0 * math.sin(math.pi * t) ** 2 if 0.0 <= t <= 1.0 else 0.0


def indicator(a: float, b: float, d: int = 1) -> Integrand:
    """Indicator of the box ``[a, b]^d``."""
    if not a < b:
        raise ParameterError(f"indicator needs a < b, got [{a}, {b}]")

    def evaluate(x):
        return np.all((x >= a) & (x <= b), axis=1).astype(float)

    return Integrand(evaluate, f"indicator:{a:g},{b:g}", (np.full(d, a), np.full(d, b)), smoothness=0.5, integral=(b - a) ** d)


def constant_on_box(lo: float, hi: float, value: float = 1.0, d: int = 1) -> Integrand:
    if not lo < hi:
        raise ParameterError(f"box needs lo < hi, got [{lo}, {hi}]")

    def evaluate(x):
        return np.where(np.all((x >= lo) & (x <= hi), axis=1), value, 0.0)

    return Integrand(evaluate, f"constant-on-box:{lo:g},{hi:g},{value:g}", (np.full(d, lo), np.full(d, hi)), smoothness=0.5, integral=value * (hi - lo) ** d)


def zero_integrand(d: int = 1) -> Integrand:
    return Integrand(lambda x: np.zeros(x.shape[0]), "zero", None, smoothness=math.inf, integral=0.0)


def custom_mixture(path: str | Path, d: int) -> Integrand:
    """Mixture of kernel bumps read from JSON.

    Schema: ``{"schema": 1, "kernel": "epanechnikov", "bandwidth": h0,
    "centers": [[...], ...], "weights": [...]}``. The integral of the
    mixture is ``sum(weights)``.
    """
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise InputError(f"cannot read mixture file {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON in {path}: {exc.msg}", exc.lineno) from None
    if doc.get("schema", 1) != 1:
        raise ParameterError(f"unsupported mixture schema {doc.get('schema')}")
    centers = np.asarray(doc["centers"], dtype=float).reshape(len(doc["centers"]), -1)
    weights = np.asarray(doc["weights"], dtype=float)
    if centers.shape[1] != d:
        raise ParameterError(f"mixture centers have dimension {centers.shape[1]}, sample has {d}")
    kernel = get_kernel(doc.get("kernel", "epanechnikov"), d)
    h0 = float(doc["bandwidth"])

    def evaluate(x):
        return mixture_eval(centers, weights, kernel, h0, x)

    return Integrand(evaluate, f"custom-mixture:{path}", None, integral=float(weights.sum()))


def parse_integrand(spec: str, d: int) -> Integrand:
    """Resolve a CLI integrand spec.

    ``sinprod``, ``zero``, ``indicator:a,b``, ``constant-on-box:lo,hi[,c]``
    or ``custom-mixture:FILE.json``.
    """
    name, _, arg = spec.partition(":")
    if name == "custom-mixture":
        return custom_mixture(arg, d)
    try:
        if name == "sinprod":
            return phi_sinprod(d)
        if name == "zero":
            return zero_integrand(d)
        if name == "indicator":
            a, b = (float(v) for v in arg.split(","))
            return indicator(a, b, d)
        if name == "constant-on-box":
            vals = [float(v) for v in arg.split(",")]
            if len(vals) not in (2, 3):
                raise ValueError(spec)
            return constant_on_box(*vals, d=d)
    except ValueError:
        raise ParameterError(f"malformed integrand spec {spec!r}") from None
    raise ParameterError(f"unknown integrand {spec!r}")


def density_mass_functional() -> FunctionalT:
    """``T(x, y) = y 1{x in [0,1]^d}``, whose target is the design mass of the cube."""

    def evaluate(x, y):
        return y * np.all((x >= 0.0) & (x <= 1.0), axis=1)

    return FunctionalT(evaluate, "density-mass")


def density_square_functional() -> FunctionalT:
    """``T(x, y) = y^2 1{x in [0,1]^d}``; targets ``int_[0,1]^d f^2``."""

    def evaluate(x, y):
        return y * y * np.all((x >= 0.0) & (x <= 1.0), axis=1)

    return FunctionalT(evaluate, "density-square")
