"""Installation self-checks: kernel moments, pinned constants, oracle
equivalence of the density pass and the test-function integral identity."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
from scipy import integrate

from .bandwidth import build_test_function
from .density import loo_density, loo_density_naive
from .estimators import FunctionalT, estimate_general_functional, estimate_plain
from .kernels import (
    check_moments,
    compute_boundary_constant,
    compute_VK,
    epanechnikov_kernel,
    load_pinned_constants,
    radial_order3_kernel,
)
from .models import phi_sinprod, sample_model1, stream

SELFTEST_SEED = 7


class CheckResult(NamedTuple):
    name: str
    passed: bool
    detail: str


def close(a, b, rtol: float, floor: float = 0.0) -> bool:
    """``|a - b| <= rtol |b| + floor``, elementwise, for scalars or arrays."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return bool(np.all(np.abs(a - b) <= rtol * np.abs(b) + floor))


def _moments(quick: bool):
    kernels = [(radial_order3_kernel(1), 2), (epanechnikov_kernel(1), 1)]
    if not quick:
        kernels += [(radial_order3_kernel(2), 2), (epanechnikov_kernel(2), 1), (epanechnikov_kernel(3), 1)]
    for k, up_to in kernels:
        tol = 1e-6 if k.dim <= 2 else 1e-2
        checks = check_moments(k, up_to, tol)
        worst = max(abs(c.error) for c in checks)
        yield CheckResult(f"moments {k.id} up to {up_to}", all(c.passed for c in checks), f"max error {worst:.2e}")


def _constants(quick: bool, fixture):
    pinned = load_pinned_constants(fixture)
    ids = ["order3-d1", "epanechnikov-d1"] if quick else sorted(pinned)
    for kid in ids:
        name, _, dim = kid.rpartition("-d")
        k = radial_order3_kernel(int(dim)) if name == "order3" else epanechnikov_kernel(int(dim))
        if kid not in pinned:
            yield CheckResult(f"constants {kid}", False, "missing from fixture")
            continue
        p = pinned[kid]
        # d = 1 constants come from quadrature and agree far below the pinned
        # tolerance; Monte Carlo constants are reproduced bit for bit.
        rtol = 1e-9 if k.dim == 1 else 1e-12
        vk = compute_VK(k)
        boundary = compute_boundary_constant(k)
        ok = close(vk, p.vk, rtol) and close(boundary, p.boundary, rtol)
        yield CheckResult(f"constants {kid}", ok, f"V_K {vk:.12g} (pinned {p.vk:.12g}), L {boundary:.12g} (pinned {p.boundary:.12g})")


def _oracle(quick: bool):
    rng = stream(SELFTEST_SEED, 0)
    worst = 0.0
    ok = True
    for trial in range(5 if quick else 20):
        d = 1 + trial % 3
        n = int(rng.integers(3, 201))
        x = rng.normal(size=(n, d))
        k = radial_order3_kernel(d)
        h = float(rng.uniform(0.3, 1.5))
        fast = loo_density(x, k, h, with_variance=True)
        slow = loo_density_naive(x, k, h, with_variance=True)
        for a, b in ((fast.fhat, slow.fhat), (fast.vhat, slow.vhat)):
            floor = 1e-12 * float(np.max(np.abs(b)))
            ok &= close(a, b, 1e-12, floor)
            worst = max(worst, float(np.max(np.abs(a - b) / (np.abs(b) + floor + 1e-300))))
    return CheckResult("loo_density vs naive oracle", ok, f"max relative difference {worst:.2e}")


def _target_identity():
    s = sample_model1(60, 1, stream(SELFTEST_SEED, 1))
    tf = build_test_function(s, phi_sinprod(1))
    lo = float(s.points.min()) - tf.h0
    hi = float(s.points.max()) + tf.h0
    breaks = np.sort(np.concatenate([s.points[:, 0] - tf.h0, s.points[:, 0] + tf.h0]))
    total = 0.0
    edges = np.concatenate([[lo], breaks, [hi]])
    for a, b in zip(edges[:-1], edges[1:]):
        if b > a:
            total += integrate.quad(lambda t: tf(np.array([[t]]))[0], a, b, epsabs=1e-13, epsrel=1e-13)[0]
    ok = abs(total - tf.target_integral) < 1e-8
    return CheckResult("test-function integral identity", ok, f"|quadrature - target| = {abs(total - tf.target_integral):.2e}")


def _reduction():
    s = sample_model1(200, 1, stream(SELFTEST_SEED, 2))
    phi = phi_sinprod(1)
    k = radial_order3_kernel(1)
    a = estimate_plain(s, phi, k, 0.3).value
    b = estimate_general_functional(s, FunctionalT(lambda x, y: phi(x)), k, 0.3).value
    return CheckResult("general functional reduces to plain", a == b, f"{a!r} vs {b!r}")


def run_selftest(quick: bool = False, fixture=None) -> list[CheckResult]:
    results = list(_moments(quick))
    results += list(_constants(quick, fixture))
    results.append(_oracle(quick))
    results.append(_target_identity())
    results.append(_reduction())
    return results


def format_table(results) -> str:
    width = max(len(r.name) for r in results)
    lines = [f"{r.name:<{width}}  {'PASS' if r.passed else 'FAIL'}  {r.detail}" for r in results]
    failed = sum(not r.passed for r in results)
    lines.append(f"{len(results) - failed}/{len(results)} checks passed")
    return "\n".join(lines)


def all_passed(results) -> bool:
    return all(r.passed for r in results)
