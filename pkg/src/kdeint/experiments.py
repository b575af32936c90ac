"""Simulation harness: benchmark replications, rate slopes and CLT checks.

Every replication draws its sample from ``stream(seed, replication)`` (rate
runs use ``stream(seed, n, replication)``), so results do not depend on how
replications are scheduled across threads.
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from fractions import Fraction
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import integrate, stats

from .bandwidth import BandwidthGrid, criterion_tables, rule_of_thumb_h0
from .density import Sample, default_threads, loo_density
from .errors import KdeintError, ParameterError, ParseError, SampleSizeError, WindowError
from .estimators import (
    FunctionalT,
    Integrand,
    estimate_from_numerators,
    estimate_general_functional,
    estimate_mc_baseline,
    estimate_regression_functional,
)
from .kernels import compute_boundary_constant, compute_VK, radial_order3_kernel
from .models import get_model, indicator, parse_integrand, phi_sinprod, phi_sinprod_1d, stream

DEFAULT_SEED = 42
BENCH_VARIANTS = ("plain", "corrected", "trimmed-plain", "trimmed-corrected", "monte-carlo")
BANDWIDTH_POLICIES = ("simulation-validation", "rule-of-thumb", "fixed")
KERNEL_ORDER = 3


def _map(fn, items, threads):
    """Ordered map, run on a thread pool when ``threads > 1``."""
    items = list(items)
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(i) for i in items]


# --------------------------------------------------------------------------
# configuration and rows


@dataclass(frozen=True)
class ExperimentConfig:
    """Declarative benchmark description (JSON schema 1).

    ``bandwidth`` is the policy; ``fixed`` takes ``h`` directly or
    ``h = h_constant * n^-h_exponent``. ``trim_box`` selects the trimmed
    test function and defaults to the design's unit-cube support.
    ``trim_threshold`` is the ``b`` of the trimmed estimator variants.
    """

    model: str = "model1"
    d: int = 1
    n: int = 1000
    replications: int = 100
    variants: tuple[str, ...] = ("plain", "corrected", "monte-carlo")
    bandwidth: str = "simulation-validation"
    h: float | None = None
    h_exponent: float | None = None
    h_constant: float | None = None
    phi: str = "sinprod"
    trim_box: bool | None = None
    trim_with: str = "candidate"
    trim_threshold: float | None = None
    grid_size: int = 17
    seed: int = DEFAULT_SEED
    threads: int | None = None
    out_dir: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "variants", tuple(self.variants))
        get_model(self.model)
        if self.d < 1:
            raise ParameterError(f"d must be >= 1, got {self.d}")
        if self.n < 3:
            raise SampleSizeError(f"n must be >= 3, got {self.n}")
        if self.replications < 1:
            raise ParameterError("replications must be >= 1")
        if not self.variants:
            raise ParameterError("no estimator variants requested")
        for v in self.variants:
            if v not in BENCH_VARIANTS:
                raise ParameterError(f"unknown variant {v!r}; choose from {BENCH_VARIANTS}")
        if self.bandwidth not in BANDWIDTH_POLICIES:
            raise ParameterError(f"unknown bandwidth policy {self.bandwidth!r}")
        if self.h_exponent is not None and not 0 < self.h_exponent < 1:
            raise ParameterError(f"h_exponent must lie in (0, 1), got {self.h_exponent}")
        if self.bandwidth == "fixed":
            if self.h is None and (self.h_exponent is None or self.h_constant is None):
                raise ParameterError("fixed bandwidth needs h, or h_exponent with h_constant")
            if self.h is not None and not self.h > 0:
                raise ParameterError(f"h must be positive, got {self.h}")
        if any(v.startswith("trimmed") for v in self.variants) and self.trim_threshold is None:
            raise ParameterError("trimmed variants need an explicit trim_threshold")
        if self.trim_with not in ("candidate", "h0"):
            raise ParameterError(f"trim_with must be 'candidate' or 'h0', got {self.trim_with!r}")
        if self.threads is not None and self.threads < 1:
            raise ParameterError("threads must be >= 1")
        if self.seed < 0 or self.seed >= 2**64:
            raise ParameterError("seed must be a 64-bit unsigned integer")
        parse_integrand(self.phi, self.d)

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        doc = dict(doc)
        schema = doc.pop("schema", 1)
        if schema != 1:
            raise ParameterError(f"unsupported config schema {schema}")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise ParameterError(f"unknown config keys {unknown}")
        return cls(**doc)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        text = Path(path).read_text()
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON in {path}: {exc.msg}", exc.lineno) from None
        if not isinstance(doc, dict):
            raise ParseError(f"config {path} must be a JSON object", 1)
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        out = {"schema": 1}
        out.update(asdict(self))
        out["variants"] = list(self.variants)
        return out

    @property
    def effective_threads(self) -> int:
        return default_threads() if self.threads is None else self.threads

    @property
    def effective_trim_box(self) -> bool:
        return get_model(self.model).unit_cube_support if self.trim_box is None else self.trim_box


@dataclass(frozen=True)
class ReplicationRow:
    replication: int
    n: int
    d: int
    variant: str
    estimate: float | None
    h: float | None
    n_used: int | None
    min_fhat: float | None
    status: str = "ok"
    wall_time: float = 0.0

    @property
    def ok(self) -> bool:
        return self.status == "ok"


@dataclass(frozen=True)
class VariantSummary:
    variant: str
    count: int
    excluded: int
    mean: float
    bias: float
    std: float
    rmse: float
    minimum: float
    q1: float
    median: float
    q3: float
    maximum: float


def summarize(rows, target: float) -> list[VariantSummary]:
    """Quartile and error summary per variant; failed rows are excluded and counted."""
    out = []
    for v in dict.fromkeys(r.variant for r in rows):
        sel = [r for r in rows if r.variant == v]
        vals = np.array(sorted(r.estimate for r in sel if r.ok), dtype=float)
        excluded = len(sel) - vals.size
        if vals.size == 0:
            nan = math.nan
            out.append(VariantSummary(v, 0, excluded, nan, nan, nan, nan, nan, nan, nan, nan, nan))
            continue
        q1, med, q3 = (float(q) for q in np.quantile(vals, [0.25, 0.5, 0.75]))
        err = vals - target
        out.append(
            VariantSummary(
                v,
                int(vals.size),
                excluded,
                float(vals.mean()),
                float(err.mean()),
                float(vals.std(ddof=1)) if vals.size > 1 else 0.0,
                math.sqrt(float(np.mean(err * err))),
                float(vals[0]),
                q1,
                med,
                q3,
                float(vals[-1]),
            )
        )
    return out


# --------------------------------------------------------------------------
# benchmark


@dataclass(frozen=True)
class BenchmarkResult:
    config: ExperimentConfig
    rows: tuple[ReplicationRow, ...]
    summary: tuple[VariantSummary, ...]
    target: float

    def variant(self, name: str) -> VariantSummary:
        for s in self.summary:
            if s.variant == name:
                return s
        raise KeyError(name)


def _fixed_h(cfg: ExperimentConfig, n: int) -> float:
    if cfg.h is not None:
        return float(cfg.h)
    return cfg.h_constant * n ** (-cfg.h_exponent)


def _bandwidths(cfg, s, phi, kernel, needed):
    """Bandwidth per kernel variant family (``plain``/``corrected``)."""
    if cfg.bandwidth == "fixed":
        h = _fixed_h(cfg, s.n)
        return {v: h for v in needed}
    if cfg.bandwidth == "rule-of-thumb":
        h = rule_of_thumb_h0(s)
        return {v: h for v in needed}
    h0 = rule_of_thumb_h0(s)
    tables = criterion_tables(
        s,
        phi,
        BandwidthGrid.geometric(h0, cfg.grid_size),
        tuple(needed),
        cfg.effective_trim_box,
        kernel=kernel,
        trim_with=cfg.trim_with,
        h0=h0,
    )
    return {v: tables[v].h_star for v in needed}


def _replicate(cfg: ExperimentConfig, rep: int, rng=None) -> list[ReplicationRow]:
    start = time.perf_counter()
    model = get_model(cfg.model)
    phi = parse_integrand(cfg.phi, cfg.d)
    kernel = radial_order3_kernel(cfg.d)
    rng = stream(cfg.seed, rep) if rng is None else rng
    s = model.sample(cfg.n, cfg.d, rng)
    needed = list(dict.fromkeys(v.replace("trimmed-", "") for v in cfg.variants if v != "monte-carlo"))
    bandwidths, band_error = {}, None
    if needed:
        try:
            bandwidths = _bandwidths(cfg, s, phi, kernel, needed)
        except KdeintError as exc:
            band_error = exc.code
    numer = phi(s.points)
    loo_cache = {}
    rows = []
    for v in cfg.variants:
        if v == "monte-carlo":
            try:
                rep_ = estimate_mc_baseline(s, phi, model.density)
                rows.append(ReplicationRow(rep, s.n, s.d, v, rep_.value, None, rep_.n_used, None))
            except KdeintError as exc:
                rows.append(ReplicationRow(rep, s.n, s.d, v, None, None, None, None, exc.code))
            continue
        base = v.replace("trimmed-", "")
        if band_error is not None:
            rows.append(ReplicationRow(rep, s.n, s.d, v, None, None, None, None, band_error))
            continue
        h = bandwidths[base]
        try:
            if h not in loo_cache:
                loo_cache[h] = loo_density(s, kernel, h, with_variance=True)
            loo = loo_cache[h]
            b = cfg.trim_threshold if v.startswith("trimmed") else None
            r = estimate_from_numerators(numer, loo, v, corrected=(base == "corrected"), b=b)
            rows.append(ReplicationRow(rep, s.n, s.d, v, r.value, h, r.n_used, r.min_fhat))
        except KdeintError as exc:
            min_fhat = loo_cache[h].min_fhat if h in loo_cache else None
            rows.append(ReplicationRow(rep, s.n, s.d, v, None, h, None, min_fhat, exc.code))
    elapsed = time.perf_counter() - start
    return [ReplicationRow(**{**asdict(r), "wall_time": elapsed}) for r in rows]


def run_benchmark(cfg: ExperimentConfig) -> BenchmarkResult:
    """Run ``cfg.replications`` paired replications of every requested variant.

    Rows are ordered by replication, then by the configured variant order.
    When ``cfg.out_dir`` is set, ``rows.csv``, ``summary.csv``,
    ``timings.csv`` and ``boxes.svg`` are written there.
    """
    phi = parse_integrand(cfg.phi, cfg.d)
    if phi.integral is None:
        raise ParameterError(f"integrand {cfg.phi!r} has no known integral to benchmark against")
    per_rep = _map(lambda r: _replicate(cfg, r), range(cfg.replications), cfg.effective_threads)
    rows = tuple(row for chunk in per_rep for row in chunk)
    result = BenchmarkResult(cfg, rows, tuple(summarize(rows, phi.integral)), float(phi.integral))
    if cfg.out_dir is not None:
        from .report import write_benchmark

        write_benchmark(result, cfg.out_dir)
    return result


# --------------------------------------------------------------------------
# rate slopes


@dataclass(frozen=True)
class RateFit:
    variant: str
    slope: float
    stderr: float
    ci_low: float
    ci_high: float
    n_grid: tuple[int, ...]
    rmse: tuple[float, ...]


@dataclass(frozen=True)
class RateCheck:
    gamma: float
    h_constant: float
    fits: dict
    rows: tuple[ReplicationRow, ...]


def calibrate_h_constant(model: str, d: int, n_ref: int, gamma: float, seed: int = DEFAULT_SEED) -> float:
    """``c`` with ``c n_ref^-gamma`` equal to the rule of thumb on a calibration sample.

    The calibration sample comes from its own stream so it never coincides
    with a replication sample.
    """
    s = get_model(model).sample(n_ref, d, stream(seed, 2**32 - 1))
    return rule_of_thumb_h0(s) * n_ref**gamma


def fit_slope(n_grid, rmse, level: float = 0.95) -> tuple[float, float, float, float]:
    """OLS of ``log rmse`` on ``log n``: slope, standard error and a t-interval."""
    if len(n_grid) < 3:
        raise ParameterError(f"rate fit needs at least 3 sample sizes, got {len(n_grid)}")
    fit = stats.linregress(np.log(np.asarray(n_grid, dtype=float)), np.log(np.asarray(rmse, dtype=float)))
    q = stats.t.ppf(0.5 + level / 2, len(n_grid) - 2)
    return float(fit.slope), float(fit.stderr), float(fit.slope - q * fit.stderr), float(fit.slope + q * fit.stderr)


def run_rate_check(
    model: str,
    d: int,
    gamma: float,
    n_grid,
    reps: int,
    *,
    variants=("corrected", "monte-carlo"),
    phi: str = "sinprod",
    h_constant: float | None = None,
    seed: int = DEFAULT_SEED,
    threads: int | None = None,
) -> RateCheck:
    """Log-log RMSE slope across ``n_grid`` with ``h = c n^-gamma``.

    ``c`` is calibrated at the smallest ``n`` unless given.
    """
    n_grid = tuple(sorted(int(n) for n in n_grid))
    if len(n_grid) < 3:
        raise ParameterError(f"rate check needs at least 3 sample sizes, got {len(n_grid)}")
    if not 0 < gamma < 1:
        raise ParameterError(f"gamma must lie in (0, 1), got {gamma}")
    c = calibrate_h_constant(model, d, n_grid[0], gamma, seed) if h_constant is None else float(h_constant)
    threads = default_threads() if threads is None else threads
    target = parse_integrand(phi, d).integral
    rows = []
    fits = {}
    for n in n_grid:
        cfg = ExperimentConfig(
            model=model, d=d, n=n, replications=reps, variants=tuple(variants), bandwidth="fixed",
            h_exponent=gamma, h_constant=c, phi=phi, seed=seed, threads=threads,
        )
        per_rep = _map(lambda r: _replicate(cfg, r, stream(seed, n, r)), range(reps), threads)
        rows.extend(row for chunk in per_rep for row in chunk)
    for v in variants:
        rmse = []
        for n in n_grid:
            vals = np.array([r.estimate for r in rows if r.n == n and r.variant == v and r.ok])
            rmse.append(math.sqrt(float(np.mean((vals - target) ** 2))) if vals.size else math.nan)
        slope, se, lo, hi = fit_slope(n_grid, rmse)
        fits[v] = RateFit(v, slope, se, lo, hi, n_grid, tuple(rmse))
    return RateCheck(float(gamma), c, fits, tuple(rows))


# --------------------------------------------------------------------------
# bandwidth windows


def _exponent(p, a, gamma: Fraction) -> Fraction:
    return Fraction(p) - Fraction(a) * gamma


def check_window(conditions, gamma) -> list[str]:
    """Check ``n^p h^a -> target`` with ``h = c n^-gamma`` in exact arithmetic.

    ``conditions`` holds ``(p, a, target)`` with ``target`` either ``math.inf``
    or ``0``. Returns the violated conditions as text (empty when admissible).
    """
    g = Fraction(str(gamma))
    bad = []
    for p, a, target in conditions:
        e = _exponent(Fraction(str(p)), Fraction(str(a)), g)
        ok = e > 0 if target == math.inf else e < 0
        if not ok:
            bad.append(f"n^{p} h^{a} -> {'inf' if target == math.inf else 0} fails (exponent {e})")
    return bad


def smooth_window(d: int, r: int = KERNEL_ORDER, s: float = 2.5):
    return [(1, 2 * d, math.inf), (1, Fraction(r) + Fraction(d, 2), 0), (1, 2 * Fraction(str(s)) + d, 0)]


def nonsmooth_window(d: int = 1, r: int = KERNEL_ORDER):
    return [(1, Fraction(3 * d + 1, 2), math.inf), (1, 2 * r - 1, 0)]


def regression_window(d: int = 1, r: int = KERNEL_ORDER):
    return [(Fraction(1, 2), r, 0), (Fraction(1, 2), d, math.inf)]


def require_window(conditions, gamma, label: str):
    bad = check_window(conditions, gamma)
    if bad:
        raise WindowError(f"gamma = {gamma} is outside the {label} window: " + "; ".join(bad))


# --------------------------------------------------------------------------
# CLT checks


@dataclass(frozen=True)
class CltSummary:
    """Empirical distribution of a normalised error against its predicted variance.

    ``alternative`` names a second candidate for the limiting variance (see
    the ``kind``-specific runners); ``matches`` reports which of the two the
    empirical variance is closer to on a log scale.
    """

    kind: str
    n: int
    replications: int
    h: float
    gamma: float
    statistics: np.ndarray = field(repr=False)
    mean: float
    variance: float
    standardized_mean: float
    theoretical_variance: float
    ratio: float
    alternative: str
    alternative_variance: float
    alternative_ratio: float
    matches: str
    ks_statistic: float
    ks_pvalue: float
    failed: int
    extras: dict = field(default_factory=dict)
    rows: tuple = field(default=(), repr=False)

    def to_dict(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in fields(self) if f.name not in ("statistics", "rows")}
        out["extras"] = dict(self.extras)
        return out


def _closer(ratio, alt_ratio, name, alt_name):
    def dist(x):
        return abs(math.log(x)) if x > 0 and math.isfinite(x) else math.inf

    return name if dist(ratio) <= dist(alt_ratio) else alt_name


def _summarize_clt(kind, rows, h, gamma, scale, center, theory, theory_name, alt, alt_name, extras=None):
    n, reps = rows[0].n, len(rows)
    ok = [r.estimate for r in rows if r.ok]
    failed = reps - len(ok)
    x = scale * (np.asarray(ok, dtype=float) - center)
    if x.size < 3:
        raise SampleSizeError(f"only {x.size} successful replications")
    mean = float(x.mean())
    var = float(x.var(ddof=1))
    sd = math.sqrt(var)
    z = (x - mean) / sd if sd > 0 else np.zeros_like(x)
    ks = stats.kstest(z, "norm") if sd > 0 else None
    ratio = var / theory if theory > 0 else math.nan
    alt_ratio = var / alt if alt > 0 else math.nan
    return CltSummary(
        kind=kind,
        n=n,
        replications=reps,
        h=h,
        gamma=gamma,
        statistics=x,
        mean=mean,
        variance=var,
        standardized_mean=mean / sd if sd > 0 else math.nan,
        theoretical_variance=theory,
        ratio=ratio,
        alternative=alt_name,
        alternative_variance=alt,
        alternative_ratio=alt_ratio,
        matches=_closer(ratio, alt_ratio, theory_name, alt_name),
        ks_statistic=float(ks.statistic) if ks else math.nan,
        ks_pvalue=float(ks.pvalue) if ks else math.nan,
        failed=failed,
        extras=dict(extras or {}),
        rows=tuple(rows),
    )


def _quad(fn, a, b, points=None) -> float:
    value, _ = integrate.quad(fn, a, b, points=points, epsabs=1e-12, epsrel=1e-12, limit=500)
    return float(value)


def _fixed_rows(draw, estimator, reps, h, variant, threads) -> tuple[ReplicationRow, ...]:
    """One row per replication of ``estimator(draw(rep))``; errors become a status."""

    def one(rep):
        start = time.perf_counter()
        s = draw(rep)
        try:
            r = estimator(s)
            row = ReplicationRow(rep, s.n, s.d, variant, r.value, h, r.n_used, r.min_fhat)
        except KdeintError as exc:
            row = ReplicationRow(rep, s.n, s.d, variant, None, h, None, None, exc.code)
        return ReplicationRow(**{**asdict(row), "wall_time": time.perf_counter() - start})

    return tuple(_map(one, range(reps), threads))


def _design_draw(model, n, d, seed):
    m = get_model(model)
    return lambda rep: m.sample(n, d, stream(seed, rep))


def run_clt_smooth(
    d: int = 1,
    n: int = 2000,
    reps: int = 200,
    gamma: float = 0.4,
    *,
    h_constant: float = 1.0,
    model: str = "model1",
    seed: int = DEFAULT_SEED,
    threads: int | None = None,
) -> CltSummary:
    """Statistics ``n h^(d/2) (Ic - 1)`` for the sine-product integrand.

    The stated limiting variance is ``V_K int phi^2 / f^2``; the doubled value
    is reported as the alternative.
    """
    require_window(smooth_window(d), gamma, "smooth CLT")
    if d != 1:
        raise ParameterError("the variance oracle is implemented for d = 1")
    threads = default_threads() if threads is None else threads
    k = radial_order3_kernel(d)
    phi = phi_sinprod(d)
    h = h_constant * n ** (-gamma)
    m = get_model(model)
    integral = _quad(lambda t: phi_sinprod_1d(t) ** 2 / m.marginal(t) ** 2, 0.0, 1.0)
    vk = compute_VK(k)
    theory = vk * integral

    def estimator(s):
        loo = loo_density(s, k, h, with_variance=True)
        return estimate_from_numerators(phi(s.points), loo, "corrected", corrected=True)

    rows = _fixed_rows(_design_draw(model, n, d, seed), estimator, reps, h, "corrected", threads)
    return _summarize_clt(
        "smooth", rows, h, gamma, n * h ** (d / 2), 1.0, theory, "1x", 2 * theory, "2x",
        {"vk": vk, "phi2_over_f2": integral},
    )


def run_clt_nonsmooth(
    n: int = 2000,
    reps: int = 200,
    gamma: float = 0.3,
    interval: tuple[float, float] = (0.2, 0.8),
    *,
    h_constant: float = 1.0,
    model: str = "model1",
    seed: int = DEFAULT_SEED,
    threads: int | None = None,
) -> CltSummary:
    """Statistics ``(n / h)^(1/2) (Ic - (b - a))`` for ``phi = 1_[a, b]`` in ``d = 1``.

    The stated limiting variance is ``2 L``. The alternative is the variance
    of the projection ``psi - psi * K_h`` with ``psi = phi / f``, which picks
    up both sides of each boundary point and a ``1 / f`` weight:
    ``2 L (1/f(a) + 1/f(b))``.
    """
    require_window(nonsmooth_window(1), gamma, "non-smooth CLT")
    a, b = (float(v) for v in interval)
    m = get_model(model)
    if not a < b:
        raise ParameterError(f"interval needs a < b, got [{a}, {b}]")
    if m.unit_cube_support and not (0.0 < a and b < 1.0):
        raise ParameterError("interval must lie strictly inside the design support")
    threads = default_threads() if threads is None else threads
    k = radial_order3_kernel(1)
    phi = indicator(a, b, 1)
    h = h_constant * n ** (-gamma)
    boundary = compute_boundary_constant(k)
    theory = 2 * boundary
    inverse_mass = 1 / m.marginal(a) + 1 / m.marginal(b)
    alt = 2 * boundary * inverse_mass

    def estimator(s):
        loo = loo_density(s, k, h, with_variance=True)
        return estimate_from_numerators(phi(s.points), loo, "corrected", corrected=True)

    rows = _fixed_rows(_design_draw(model, n, 1, seed), estimator, reps, h, "corrected", threads)
    return _summarize_clt(
        "nonsmooth", rows, h, gamma, math.sqrt(n / h), b - a, theory, "2L", alt, "2L/f",
        {"boundary_constant": boundary, "one_sided_weighted": boundary * inverse_mass},
    )


@dataclass(frozen=True)
class RegressionModel:
    """``Y = g(X) + sigma(X) e`` with ``e ~ N(0, 1)`` over a named design (``d = 1``)."""

    g: Callable[[np.ndarray], np.ndarray]
    sigma: float
    psi: Integrand
    design: str = "model1"

    def sample(self, n: int, rng: np.random.Generator) -> Sample:
        x = get_model(self.design).sample(n, 1, rng).points
        y = self.g(x[:, 0]) + self.sigma * rng.standard_normal(n)
        return Sample(x, y)


def default_regression_model(sigma: float = 0.5) -> RegressionModel:
    """``g(x) = cos(2 pi x)`` on the Gaussian design with ``psi = phi_sinprod``."""
    return RegressionModel(lambda x: np.cos(2 * np.pi * x), float(sigma), phi_sinprod(1))


def run_regression_experiment(
    n: int = 2000,
    reps: int = 200,
    gamma: float = 0.2,
    sigma: float = 0.5,
    *,
    model: RegressionModel | None = None,
    h_constant: float = 1.0,
    seed: int = DEFAULT_SEED,
    threads: int | None = None,
) -> CltSummary:
    """Statistics ``n^(1/2) (c_hat - c)`` with ``c = int g psi``.

    The predicted variance is ``E[sigma^2 psi^2 / f^2] = sigma^2 int psi^2 / f``;
    the alternative subtracts ``(int sigma psi)^2``, the literal variance of
    ``sigma psi(X) / f(X)``.
    """
    require_window(regression_window(1), gamma, "regression")
    if sigma < 0:
        raise ParameterError(f"sigma must be >= 0, got {sigma}")
    model = default_regression_model(sigma) if model is None else model
    threads = default_threads() if threads is None else threads
    k = radial_order3_kernel(1)
    h = h_constant * n ** (-gamma)
    m = get_model(model.design)
    lo, hi = (0.0, 1.0) if model.psi.box is None else (float(model.psi.box[0][0]), float(model.psi.box[1][0]))

    def psi1(t):
        return float(model.psi(np.array([[t]]))[0])

    def g1(t):
        return float(model.g(np.array([t]))[0])

    c = _quad(lambda t: g1(t) * psi1(t), lo, hi)
    theory = model.sigma**2 * _quad(lambda t: psi1(t) ** 2 / m.marginal(t), lo, hi)
    alt = theory - (model.sigma * _quad(psi1, lo, hi)) ** 2

    rows = _fixed_rows(
        lambda rep: model.sample(n, stream(seed, rep)),
        lambda s: estimate_regression_functional(s, model.psi, k, h),
        reps, h, "regression", threads,
    )
    return _summarize_clt(
        "regression", rows, h, gamma, math.sqrt(n), c, theory,
        "second-moment", alt, "variance", {"c": c, "sigma": model.sigma},
    )


# --------------------------------------------------------------------------
# general functionals


@dataclass(frozen=True)
class FunctionalCheck:
    functional: str
    target: float
    gamma: float
    h_constant: float
    n_grid: tuple[int, ...]
    scaled_variance: tuple[float, ...]
    mean: tuple[float, ...]
    rows: tuple[ReplicationRow, ...]


def run_functional_experiment(
    functional: FunctionalT,
    target: float,
    n_grid,
    reps: int,
    *,
    model: str = "model2",
    d: int = 1,
    gamma: float = 0.2857,
    h_constant: float | None = None,
    seed: int = DEFAULT_SEED,
    threads: int | None = None,
) -> FunctionalCheck:
    """Empirical variance of ``n^(1/2) (I_T - target)`` across ``n_grid``."""
    n_grid = tuple(sorted(int(n) for n in n_grid))
    if not n_grid:
        raise ParameterError("empty n grid")
    threads = default_threads() if threads is None else threads
    c = calibrate_h_constant(model, d, n_grid[0], gamma, seed) if h_constant is None else float(h_constant)
    k = radial_order3_kernel(d)
    rows, variances, means = [], [], []
    for n in n_grid:
        h = c * n ** (-gamma)
        m = get_model(model)
        batch = _fixed_rows(
            lambda rep, n=n: m.sample(n, d, stream(seed, n, rep)),
            lambda s, h=h: estimate_general_functional(s, functional, k, h),
            reps, h, "general-functional", threads,
        )
        rows.extend(batch)
        vals = np.array([r.estimate for r in batch if r.ok], dtype=float)
        scaled = math.sqrt(n) * (vals - target)
        variances.append(float(scaled.var(ddof=1)) if vals.size > 1 else math.nan)
        means.append(float(vals.mean()) if vals.size else math.nan)
    return FunctionalCheck(functional.name, float(target), float(gamma), c, n_grid, tuple(variances), tuple(means), tuple(rows))
