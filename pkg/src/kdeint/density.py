"""Leave-one-out kernel density and variance estimates at the sample points."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError, SampleSizeError
from .kernels import Kernel

# Row-block size of the pairwise pass. Fixed, so results never depend on the
# number of worker threads.
BLOCK = 512


@dataclass(frozen=True, eq=False)
class Sample:
    """An i.i.d. design, optionally with regression responses.

    ``points`` has shape ``(n, d)``; a 1-d input is read as ``n`` scalar
    observations.
    """

    points: np.ndarray
    responses: np.ndarray | None = field(default=None)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[1] < 1:
            raise ParameterError(f"points must be an (n, d) matrix, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ParameterError("sample contains non-finite coordinates")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if self.responses is not None:
            y = np.asarray(self.responses, dtype=float).reshape(-1)
            if y.shape[0] != pts.shape[0]:
                raise ParameterError(f"{y.shape[0]} responses for {pts.shape[0]} points")
            if not np.all(np.isfinite(y)):
                raise ParameterError("responses contain non-finite values")
            y.setflags(write=False)
            object.__setattr__(self, "responses", y)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def permuted(self, order) -> "Sample":
        order = np.asarray(order)
        y = None if self.responses is None else self.responses[order]
        return Sample(self.points[order], y)


def as_sample(s) -> Sample:
    return s if isinstance(s, Sample) else Sample(s)


@dataclass(frozen=True, eq=False)
class LooDensity:
    """Leave-one-out density (and optionally variance) values at each ``X_i``."""

    h: float
    fhat: np.ndarray
    vhat: np.ndarray | None
    kernel_id: str

    @property
    def min_fhat(self) -> float:
        return float(self.fhat.min())

    @property
    def n(self) -> int:
        return self.fhat.shape[0]


def default_threads() -> int:
    """Worker count for orchestration layers: ``KDEINT_THREADS`` if set, else 1."""
    raw = os.environ.get("KDEINT_THREADS")
    if raw is None:
        return 1
    try:
        value = int(raw)
    except ValueError:
        raise ParameterError(f"KDEINT_THREADS must be an integer, got {raw!r}") from None
    if value < 1:
        raise ParameterError("KDEINT_THREADS must be >= 1")
    return value


def kernel_block(k: Kernel, a: np.ndarray, b: np.ndarray, h: float) -> np.ndarray:
    """Matrix ``h^-d K((a_i - b_j) / h)`` for point sets ``a`` and ``b``."""
    d = a.shape[1]
    diff = (a[:, None, :] - b[None, :, :]) / h
    if k.radial:
        if d == 1:
            dist = np.abs(diff[..., 0])
        else:
            dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
        vals = k.at_distance(dist)
    else:
        vals = k.evaluate(diff)
    return vals / h**d


def _pair_sums(k, x, h, a, b):
    """Row and column sums of K and K^2 for the block pair ``(a, b)``, ``a <= b``."""
    kb = kernel_block(k, x[a : a + BLOCK], x[b : b + BLOCK], h)
    if a == b:
        np.fill_diagonal(kb, 0.0)
    k2 = kb * kb
    rows = (kb.sum(axis=1), k2.sum(axis=1))
    cols = None if a == b else (kb.sum(axis=0), k2.sum(axis=0))
    return a, b, rows, cols


def kernel_sums(k: Kernel, points: np.ndarray, h: float, threads: int = 1):
    """Accumulate ``sum_{j != i} K_ij`` and ``sum_{j != i} K_ij^2`` for every ``i``.

    Each unordered block pair is evaluated once and its contribution added to
    both row blocks (``K_ij = K_ji`` for symmetric kernels). Partial results
    are reduced in a fixed block order, so the output is bitwise independent
    of ``threads``.
    """
    n = points.shape[0]
    s1 = np.zeros(n)
    s2 = np.zeros(n)
    starts = range(0, n, BLOCK)
    pairs = [(a, b) for a in starts for b in starts if a <= b]

    def reduce(result):
        a, b, rows, cols = result
        s1[a : a + BLOCK] += rows[0]
        s2[a : a + BLOCK] += rows[1]
        if cols is not None:
            s1[b : b + BLOCK] += cols[0]
            s2[b : b + BLOCK] += cols[1]

    if threads > 1 and len(pairs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for result in pool.map(lambda p: _pair_sums(k, points, h, *p), pairs):
                reduce(result)
    else:
        for a, b in pairs:
            reduce(_pair_sums(k, points, h, a, b))
    return s1, s2


def _canonical_order(points: np.ndarray) -> np.ndarray:
    # Lexicographic row order; a permuted sample is processed identically.
    return np.lexsort(points.T[::-1])


def loo_density(s, k: Kernel, h: float, with_variance: bool = False, threads: int = 1) -> LooDensity:
    """Leave-one-out density estimates ``f^(i)(X_i)`` at every sample point.

    ``fhat[i] = (n-1)^-1 sum_{j != i} h^-d K((X_i - X_j)/h)``. With
    ``with_variance``, also ``vhat[i] = ((n-1)(n-2))^-1 sum_{j != i}
    (K_ij - fhat[i])^2``, obtained from the accumulated sums through
    ``sum (K_ij - f)^2 = sum K_ij^2 - (n-1) f^2``.

    Rows are processed in lexicographic order internally and mapped back,
    so permuting the sample permutes the output bit for bit.
    """
    s = as_sample(s)
    if not h > 0:
        raise ParameterError(f"bandwidth must be positive, got {h}")
    if s.d != k.dim:
        raise ParameterError(f"kernel dimension {k.dim} does not match sample dimension {s.d}")
    n = s.n
    if n < 2 or (with_variance and n < 3):
        raise SampleSizeError(f"need n >= {3 if with_variance else 2}, got n = {n}")
    order = _canonical_order(s.points)
    s1, s2 = kernel_sums(k, s.points[order], float(h), threads)
    fhat_sorted = s1 / (n - 1)
    fhat = np.empty(n)
    fhat[order] = fhat_sorted
    vhat = None
    if with_variance:
        ss = s2 - (n - 1) * fhat_sorted**2
        # rounding can leave a tiny negative residue of a true sum of squares
        ss = np.maximum(ss, 0.0)
        vhat = np.empty(n)
        vhat[order] = ss / ((n - 1) * (n - 2))
    return LooDensity(float(h), fhat, vhat, k.id)


def loo_density_naive(s, k: Kernel, h: float, with_variance: bool = False) -> LooDensity:
    """Reference implementation: one row at a time, two-pass variance.

    Used as the independent oracle for :func:`loo_density`.
    """
    s = as_sample(s)
    x = s.points
    n, d = x.shape
    fhat = np.empty(n)
    vhat = np.empty(n) if with_variance else None
    for i in range(n):
        others = np.delete(x, i, axis=0)
        kij = k.evaluate((x[i] - others) / h) / h**d
        fhat[i] = kij.sum() / (n - 1)
        if with_variance:
            vhat[i] = ((kij - fhat[i]) ** 2).sum() / ((n - 1) * (n - 2))
    return LooDensity(float(h), fhat, vhat, k.id)


def mixture_eval(centers, weights, k: Kernel, h0: float, x) -> np.ndarray:
    """Evaluate ``sum_i weights[i] h0^-d K((x - centers_i) / h0)``.

    ``x`` is a single point or an ``(m, d)`` array; the result is a scalar
    or a length-``m`` vector accordingly. Weights are used as given; callers
    normalise them.
    """
    c = as_sample(centers).points
    w = np.asarray(weights, dtype=float).reshape(-1)
    if w.shape[0] != c.shape[0]:
        raise ParameterError(f"{w.shape[0]} weights for {c.shape[0]} centers")
    if not h0 > 0:
        raise ParameterError(f"h0 must be positive, got {h0}")
    xa = np.asarray(x, dtype=float)
    single = xa.ndim == 0 or (xa.ndim == 1 and (c.shape[1] > 1 or xa.shape[0] == 1))
    pts = xa.reshape(1, -1) if single else (xa[:, None] if xa.ndim == 1 else xa)
    if pts.shape[1] != c.shape[1]:
        raise ParameterError(f"point dimension {pts.shape[1]} does not match centers dimension {c.shape[1]}")
    out = np.empty(pts.shape[0])
    for a in range(0, pts.shape[0], BLOCK):
        out[a : a + BLOCK] = kernel_block(k, pts[a : a + BLOCK], c, h0) @ w
    return float(out[0]) if single else out
