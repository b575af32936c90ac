"""Smoothing kernels, moment checks and asymptotic-variance constants.

Two kernels are shipped:

* :func:`radial_order3_kernel`, a signed radial kernel of order 3, used for
  every density estimate;
* :func:`epanechnikov_kernel`, the nonnegative order-2 kernel used to build
  the synthetic test function of the bandwidth selector.

The constants :func:`compute_VK` and :func:`compute_boundary_constant` enter
the limiting variances of the corrected estimator. In one dimension they are
computed by adaptive quadrature; for ``d >= 2`` by seeded Monte Carlo.
"""

from __future__ import annotations

import itertools
import json
import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Callable, NamedTuple

import numpy as np
from scipy import integrate

from .errors import InputError, ParameterError, ParseError, ToleranceError, UnsupportedKernelError

# Fixed seed for every Monte Carlo constant, so constants are reproducible.
MC_SEED = 20150901
MC_DRAWS = 10**7
_MC_CHUNK = 10**6


def unit_ball_volume(d: int) -> float:
    """Volume of the unit ball in ``R^d``, ``2 pi^(d/2) / (d Gamma(d/2))``."""
    if d < 1:
        raise ParameterError(f"dimension must be >= 1, got {d}")
    return 2.0 * math.pi ** (d / 2.0) / (d * math.gamma(d / 2.0))


@dataclass(frozen=True, eq=False)
class Kernel:
    """A ``d``-dimensional kernel with a declared order.

    Parameters
    ----------
    name : str
        Short identifier, e.g. ``"order3"``.
    dim : int
        Dimension ``d`` of the argument.
    order : int
        Declared order ``r``: moments of total degree ``1..r-1`` vanish.
    support_radius : float
        ``K(x) = 0`` for ``|x| >= support_radius``; may be ``inf``.
    evaluate : callable
        Maps an array of shape ``(..., d)`` to an array of shape ``(...)``.
    profile : callable, optional
        For radial kernels, ``K(x) = profile(|x|)``. Enables the fast
        distance-based evaluation path.
    breakpoints : tuple of float
        Radii where the profile is not smooth (kinks or jumps); quadrature
        splits there.
    """

    name: str
    dim: int
    order: int
    support_radius: float
    evaluate: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    profile: Callable[[np.ndarray], np.ndarray] | None = field(default=None, repr=False)
    breakpoints: tuple[float, ...] = ()

    @property
    def radial(self) -> bool:
        return self.profile is not None

    @property
    def id(self) -> str:
        return f"{self.name}-d{self.dim}"

    def __call__(self, x) -> np.ndarray:
        return self.evaluate(_as_points(x, self.dim))

    def at_distance(self, r: np.ndarray) -> np.ndarray:
        """Evaluate a radial kernel at Euclidean norms ``r``."""
        if self.profile is None:
            raise UnsupportedKernelError(f"kernel {self.id} is not radial")
        return self.profile(np.asarray(r, dtype=float))


def _as_points(x, d: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if d == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        return x[..., None]
    if x.shape[-1] != d:
        raise ParameterError(f"expected points with last axis {d}, got shape {x.shape}")
    return x


def _radial_kernel(name, d, order, profile, breakpoints=(1.0,), support=1.0):
    def evaluate(x):
        return profile(np.sqrt(np.sum(x * x, axis=-1)))

    return Kernel(name, d, order, support, evaluate, profile, tuple(breakpoints))


@lru_cache(maxsize=None)
def radial_order3_kernel(d: int) -> Kernel:
    """Signed radial kernel of order 3 supported on the unit ball.

    ``K(x) = (d+1) (d+2 - (d+3)|x|) / (2 c_d)`` for ``|x| < 1``, where
    ``c_d`` is the unit-ball volume. It is negative for
    ``(d+2)/(d+3) < |x| < 1``; no clipping is applied.

    >>> float(radial_order3_kernel(1)(0.0))
    1.5
    """
    if d < 1:
        raise ParameterError(f"dimension must be >= 1, got {d}")
    scale = 0.5 * (d + 1) / unit_ball_volume(d)

    def profile(r):
        r = np.asarray(r, dtype=float)
        return np.where(r < 1.0, scale * ((d + 2) - (d + 3) * r), 0.0)

    return _radial_kernel("order3", d, 3, profile)


@lru_cache(maxsize=None)
def epanechnikov_kernel(d: int) -> Kernel:
    """Epanechnikov kernel ``(d+2)(1-|x|^2) / (2 c_d)`` on the unit ball."""
    if d < 1:
        raise ParameterError(f"dimension must be >= 1, got {d}")
    scale = 0.5 * (d + 2) / unit_ball_volume(d)

    def profile(r):
        r = np.asarray(r, dtype=float)
        return np.where(r < 1.0, scale * (1.0 - r * r), 0.0)

    return _radial_kernel("epanechnikov", d, 2, profile)


KERNELS = {
    "order3": radial_order3_kernel,
    "epanechnikov": epanechnikov_kernel,
}


def get_kernel(name: str, d: int) -> Kernel:
    try:
        factory = KERNELS[name]
    except KeyError:
        raise ParameterError(f"unknown kernel {name!r}; choose from {sorted(KERNELS)}") from None
    return factory(d)


# --------------------------------------------------------------------------
# quadrature helpers


def _quad(func, a, b, epsabs, limit=200):
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            return integrate.quad(func, a, b, epsabs=epsabs, epsrel=0.0, limit=limit)
        except integrate.IntegrationWarning as exc:
            raise ToleranceError(f"quadrature did not converge on [{a}, {b}]: {exc}", math.inf) from None


def _quad_pieces(func, edges, epsabs):
    """Integrate ``func`` over consecutive ``edges``, summing values and errors."""
    total, err = 0.0, 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        if b > a:
            v, e = _quad(func, a, b, epsabs)
            total += v
            err += e
    return total, err


def _line_breaks(k: Kernel) -> list[float]:
    """Breakpoints of ``t -> K(t)`` in one dimension, including the support ends."""
    R = k.support_radius
    pts = {0.0}
    for b in k.breakpoints:
        pts.update((-b, b))
    if math.isfinite(R):
        pts.update((-R, R))
    return sorted(pts)


def _edges(lo, hi, breaks):
    inside = [p for p in breaks if lo < p < hi]
    return [lo, *inside, hi]


def multi_indices(d: int, up_to: int):
    """All multi-indices ``l`` in ``N^d`` with ``sum(l) <= up_to``, by degree."""
    out = []
    for deg in range(up_to + 1):
        for idx in itertools.product(range(deg + 1), repeat=d):
            if sum(idx) == deg:
                out.append(idx)
    return out


# --------------------------------------------------------------------------
# moments


class MomentCheck(NamedTuple):
    index: tuple[int, ...]
    value: float
    passed: bool
    error: float


def check_moments(k: Kernel, up_to: int, tol: float = 1e-6, *, draws: int = MC_DRAWS, seed: int = MC_SEED):
    """Numerically compute the moments ``int x^l K(x) dx`` for ``|l| <= up_to``.

    Quadrature is used for ``d <= 2`` (polar coordinates in the plane) and
    seeded Monte Carlo over the support ball for ``d >= 3``. The zeroth
    moment passes iff ``|m - 1| < tol``, the others iff ``|m| < tol``.

    Returns
    -------
    list of MomentCheck
        One entry per multi-index, ordered by total degree.
    """
    if up_to < 0:
        raise ParameterError("up_to must be >= 0")
    indices = multi_indices(k.dim, up_to)
    if k.dim == 1:
        values = [_moment_1d(k, idx[0], tol) for idx in indices]
    elif k.dim == 2:
        values = [_moment_2d(k, idx, tol) for idx in indices]
    else:
        values = _moments_mc(k, indices, draws, seed)
    checks = []
    for idx, (val, err) in zip(indices, values):
        target = 1.0 if sum(idx) == 0 else 0.0
        checks.append(MomentCheck(idx, float(val), bool(abs(val - target) < tol), float(err)))
    return checks


def _moment_1d(k, power, tol):
    R = k.support_radius
    edges = _edges(-R, R, _line_breaks(k)) if math.isfinite(R) else [-np.inf, *_line_breaks(k), np.inf]
    return _quad_pieces(lambda x: x**power * float(k(x)), edges, max(tol * 1e-3, 1e-14))


def _moment_2d(k, idx, tol):
    a, b = idx
    R = k.support_radius
    radii = [0.0, *sorted(p for p in k.breakpoints if 0 < p < R), R]
    eps = max(tol * 1e-3, 1e-13)
    inner_err = [0.0]

    def inner(theta):
        c, s = math.cos(theta), math.sin(theta)

        def f(rho):
            return float(k(np.array([rho * c, rho * s]))) * (rho * c) ** a * (rho * s) ** b * rho

        v, e = _quad_pieces(f, radii, eps / 10)
        inner_err[0] = max(inner_err[0], e)
        return v

    quarter = math.pi / 2
    val, err = _quad_pieces(inner, [0.0, quarter, 2 * quarter, 3 * quarter, 4 * quarter], eps)
    return val, err + 2 * math.pi * inner_err[0]


def _uniform_ball(rng, m, d, radius):
    g = rng.standard_normal((m, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return g * (radius * rng.random(m) ** (1.0 / d))[:, None]


def _moments_mc(k, indices, draws, seed):
    R = k.support_radius
    if not math.isfinite(R):
        raise UnsupportedKernelError("Monte Carlo moments need a compactly supported kernel")
    rng = np.random.default_rng(seed)
    vol = unit_ball_volume(k.dim) * R**k.dim
    top = max(sum(idx) for idx in indices)
    s1 = np.zeros(len(indices))
    s2 = np.zeros(len(indices))
    done = 0
    while done < draws:
        m = min(_MC_CHUNK, draws - done)
        x = _uniform_ball(rng, m, k.dim, R)
        kv = k.evaluate(x) * vol
        # xpow[p][:, j] = x[:, j] ** p, by repeated multiplication
        xpow = [np.ones_like(x)]
        for _ in range(top):
            xpow.append(xpow[-1] * x)
        for n, idx in enumerate(indices):
            vals = kv.copy()
            for j, p in enumerate(idx):
                if p:
                    vals *= xpow[p][:, j]
            s1[n] += vals.sum()
            s2[n] += vals @ vals
        done += m
    mean = s1 / draws
    se = np.sqrt(np.maximum(s2 / draws - mean**2, 0.0) / draws)
    return list(zip(mean, 3.0 * se))


# --------------------------------------------------------------------------
# asymptotic constants


@dataclass(frozen=True)
class KernelConstants:
    """Constants of the limiting variances for one kernel.

    ``vk`` multiplies ``int phi^2 / f^2`` in the smooth-integrand limit;
    ``boundary`` is the per-boundary-point constant of the jump-integrand
    limit.
    """

    kernel_id: str
    vk: float
    boundary: float
    quadrature_tolerance: float


def _default_tol(k):
    return 1e-6 if k.dim == 1 else 1e-2


def compute_VK(k: Kernel, tol: float | None = None, *, draws: int = MC_DRAWS, seed: int = MC_SEED) -> float:
    """Double-convolution constant ``int (int (K(u+v) - K(v)) K(u) du)^2 dv``.

    Nested adaptive quadrature for ``d == 1``; seeded Monte Carlo with
    ``draws`` kernel evaluations for ``d >= 2``.

    Raises
    ------
    ToleranceError
        If the achieved error bound exceeds ``tol``.
    """
    tol = _default_tol(k) if tol is None else tol
    if k.dim == 1:
        value, err = _vk_quadrature(k, tol)
    else:
        value, err = _vk_monte_carlo(k, draws, seed)
    if err > tol:
        raise ToleranceError(f"V_K for kernel {k.id} not within {tol:g}", err)
    return value


def _vk_quadrature(k, tol):
    R = k.support_radius
    if not math.isfinite(R):
        eps = tol * 1e-3

        def g(v):
            inner, _ = _quad(lambda u: float(k(u + v)) * float(k(u)), -np.inf, np.inf, eps)
            return inner - float(k(v))

        return _quad(lambda v: g(v) ** 2, -np.inf, np.inf, eps)

    breaks = _line_breaks(k)
    eps_in = max(tol * 1e-4, 1e-14)
    inner_err = [0.0]
    g_max = [0.0]

    def g(v):
        u_breaks = sorted(set(breaks) | {p - v for p in breaks})
        val, err = _quad_pieces(lambda u: float(k(u + v)) * float(k(u)), _edges(-R, R, u_breaks), eps_in)
        inner_err[0] = max(inner_err[0], err)
        out = val - float(k(v))
        g_max[0] = max(g_max[0], abs(out))
        return out

    v_breaks = sorted({p - q for p in breaks for q in breaks})
    value, err = _quad_pieces(lambda v: g(v) ** 2, _edges(-2 * R, 2 * R, v_breaks), max(tol * 1e-3, 1e-13))
    err += 2.0 * g_max[0] * inner_err[0] * 4.0 * R
    return value, err


def _vk_monte_carlo(k, draws, seed):
    R = k.support_radius
    if not math.isfinite(R):
        raise UnsupportedKernelError("Monte Carlo V_K needs a compactly supported kernel")
    if k.radial:
        return _vk_radial_hybrid(k, draws, seed)
    d = k.dim
    rng = np.random.default_rng(seed)
    inner = 1000
    outer = max(draws // (2 * inner), 2)
    vol_in = unit_ball_volume(d) * R**d
    vol_out = unit_ball_volume(d) * (2 * R) ** d
    prods = np.empty(outer)
    block = max(1, _MC_CHUNK // (2 * inner))
    for start in range(0, outer, block):
        m = min(block, outer - start)
        v = _uniform_ball(rng, m, d, 2 * R)
        ests = []
        for _ in range(2):
            u = _uniform_ball(rng, m * inner, d, R).reshape(m, inner, d)
            conv = vol_in * np.mean(k.evaluate(u + v[:, None, :]) * k.evaluate(u), axis=1)
            ests.append(conv - k.evaluate(v))
        prods[start : start + m] = vol_out * ests[0] * ests[1]
    return float(prods.mean()), float(3.0 * prods.std(ddof=1) / math.sqrt(outer))


def _vk_radial_hybrid(k, draws, seed):
    """V_K for a radial kernel: Gauss-Legendre in the radius of ``v``,
    Monte Carlo for the self-convolution at each node.

    The convolution at each node is estimated twice from independent halves
    of the draws; the product of the two is unbiased for ``g(v)^2``.
    """
    d, R = k.dim, k.support_radius
    rng = np.random.default_rng(seed)
    breaks = sorted({0.0, 2 * R, *[p for p in k.breakpoints if p < 2 * R],
                     *[2 * p for p in k.breakpoints if 2 * p < 2 * R],
                     *[R + p for p in k.breakpoints if R + p < 2 * R]})
    gl_x, gl_w = np.polynomial.legendre.leggauss(16)
    nodes, weights = [], []
    for a, b in zip(breaks[:-1], breaks[1:]):
        nodes.append(0.5 * (b - a) * gl_x + 0.5 * (a + b))
        weights.append(0.5 * (b - a) * gl_w)
    rho = np.concatenate(nodes)
    w = np.concatenate(weights)
    sphere = d * unit_ball_volume(d)
    vol_in = unit_ball_volume(d) * R**d
    per_half = max(draws // (2 * len(rho)), 2)
    sums = np.zeros((2, len(rho)))
    sq = np.zeros((2, len(rho)))
    chunk = max(1, _MC_CHUNK // len(rho))
    for half in range(2):
        done = 0
        while done < per_half:
            m = min(chunk, per_half - done)
            u = _uniform_ball(rng, m, d, R)
            ku = k.evaluate(u)
            shifted = u.copy()
            for j, r in enumerate(rho):
                shifted[:, 0] = u[:, 0] + r
                vals = vol_in * k.evaluate(shifted) * ku
                sums[half, j] += vals.sum()
                sq[half, j] += vals @ vals
            done += m
    conv = sums / per_half
    var_conv = np.maximum(sq / per_half - conv**2, 0.0) / per_half
    g = conv - k.at_distance(rho)[None, :]
    integrand = g[0] * g[1] * rho ** (d - 1) * sphere
    value = float(integrand @ w)
    # delta method on the product of two independent estimates
    var = ((g[1] ** 2 * var_conv[0] + g[0] ** 2 * var_conv[1]) * (rho ** (d - 1) * sphere * w) ** 2).sum()
    return value, float(3.0 * math.sqrt(var))


def compute_boundary_constant(k: Kernel, tol: float | None = None, *, draws: int = MC_DRAWS, seed: int = MC_SEED) -> float:
    """Boundary constant ``iint min(z1, z1')_+ K(z) K(z') dz dz'``.

    In one dimension this equals ``int_0^inf S(t)^2 dt`` with the tail
    mass ``S(t) = int_t^inf K``, which is what the quadrature evaluates.
    For radial kernels in ``d >= 2`` the outer normal is rotated onto the
    first axis and the double integral is estimated by Monte Carlo.

    Raises
    ------
    UnsupportedKernelError
        For a non-radial kernel with ``d >= 2``.
    ToleranceError
        If the achieved error bound exceeds ``tol``.
    """
    tol = _default_tol(k) if tol is None else tol
    if k.dim == 1:
        value, err = _boundary_quadrature(k, tol)
    elif not k.radial:
        raise UnsupportedKernelError("boundary constant in d >= 2 requires a radial kernel")
    else:
        value, err = _boundary_monte_carlo(k, draws, seed)
    if err > tol:
        raise ToleranceError(f"boundary constant for kernel {k.id} not within {tol:g}", err)
    return value


def _boundary_quadrature(k, tol):
    R = k.support_radius
    if not math.isfinite(R):
        R = np.inf
    breaks = [p for p in _line_breaks(k) if p >= 0.0]
    eps_in = max(tol * 1e-4, 1e-14)
    inner_err = [0.0]

    def tail(t):
        edges = _edges(t, R, breaks) if math.isfinite(R) else [t, np.inf]
        val, err = _quad_pieces(lambda z: float(k(z)), edges, eps_in)
        inner_err[0] = max(inner_err[0], err)
        return val

    edges = _edges(0.0, R, breaks) if math.isfinite(R) else [0.0, np.inf]
    value, err = _quad_pieces(lambda t: tail(t) ** 2, edges, max(tol * 1e-3, 1e-13))
    span = R if math.isfinite(R) else 1.0
    return value, err + 2.0 * inner_err[0] * span


def _boundary_monte_carlo(k, draws, seed):
    R = k.support_radius
    if not math.isfinite(R):
        raise UnsupportedKernelError("Monte Carlo boundary constant needs a compactly supported kernel")
    d = k.dim
    rng = np.random.default_rng(seed)
    vol = unit_ball_volume(d) * R**d
    pairs = draws // 2
    s1 = s2 = 0.0
    done = 0
    while done < pairs:
        m = min(_MC_CHUNK // 2, pairs - done)
        z = _uniform_ball(rng, m, d, R)
        zp = _uniform_ball(rng, m, d, R)
        vals = vol * vol * np.maximum(np.minimum(z[:, 0], zp[:, 0]), 0.0) * k.evaluate(z) * k.evaluate(zp)
        s1 += vals.sum()
        s2 += (vals * vals).sum()
        done += m
    mean = s1 / pairs
    se = math.sqrt(max(s2 / pairs - mean * mean, 0.0) / pairs)
    return float(mean), float(3.0 * se)


def kernel_constants(k: Kernel, tol: float | None = None) -> KernelConstants:
    tol = _default_tol(k) if tol is None else tol
    return KernelConstants(k.id, compute_VK(k, tol), compute_boundary_constant(k, tol), tol)


def load_pinned_constants(path=None) -> dict[str, KernelConstants]:
    """Pinned regression values of ``V_K`` and ``L`` keyed by kernel id.

    Reads the packaged ``data/constants.json`` unless ``path`` is given.
    """
    try:
        if path is None:
            text = resources.files("kdeint").joinpath("data/constants.json").read_text()
        else:
            text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read constants fixture: {exc}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid constants fixture: {exc.msg}", exc.lineno) from None
    if doc.get("schema") != 1:
        raise ParameterError(f"unsupported constants schema {doc.get('schema')}")
    return {
        kid: KernelConstants(kid, float(c["vk"]), float(c["boundary"]), float(c["tolerance"]))
        for kid, c in doc["constants"].items()
    }
