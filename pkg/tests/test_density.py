import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import integrate

from kdeint.density import (
    BLOCK,
    Sample,
    default_threads,
    kernel_sums,
    loo_density,
    loo_density_naive,
    mixture_eval,
)
from kdeint.errors import ParameterError, SampleSizeError
from kdeint.kernels import epanechnikov_kernel, radial_order3_kernel


def rel_close(a, b, rtol=1e-12):
    floor = rtol * max(float(np.max(np.abs(b))), 1e-300)
    np.testing.assert_allclose(a, b, rtol=rtol, atol=floor)


def brute_force(x, k, h):
    """Triple-nested scalar loop, sharing no code with the library paths."""
    n, d = x.shape
    f = np.zeros(n)
    v = np.zeros(n)
    for i in range(n):
        vals = []
        for j in range(n):
            if i != j:
                vals.append(float(k.evaluate(((x[i] - x[j]) / h)[None, :])[0]) / h**d)
        f[i] = sum(vals) / (n - 1)
        v[i] = sum((t - f[i]) ** 2 for t in vals) / ((n - 1) * (n - 2))
    return f, v


class TestSample:
    def test_vector_is_column(self):
        s = Sample(np.arange(4.0))
        assert s.points.shape == (4, 1)
        assert s.n == 4 and s.d == 1

    def test_read_only(self):
        s = Sample(np.zeros((3, 2)))
        with pytest.raises(ValueError):
            s.points[0, 0] = 1.0

    def test_rejects_non_finite(self):
        with pytest.raises(ParameterError):
            Sample(np.array([0.0, np.nan]))
        with pytest.raises(ParameterError):
            Sample(np.zeros(3), np.array([0.0, 1.0, np.inf]))

    def test_response_length_checked(self):
        with pytest.raises(ParameterError):
            Sample(np.zeros(3), np.zeros(2))

    def test_permuted_keeps_pairs(self):
        s = Sample(np.arange(3.0), np.array([10.0, 11.0, 12.0]))
        p = s.permuted([2, 0, 1])
        assert p.points[:, 0].tolist() == [2.0, 0.0, 1.0]
        assert p.responses.tolist() == [12.0, 10.0, 11.0]


class TestLooDensity:
    def test_two_point_example(self):
        h = 0.4
        loo = loo_density(np.array([0.0, h / 2]), radial_order3_kernel(1), h)
        np.testing.assert_allclose(loo.fhat, [0.5 / h, 0.5 / h], rtol=1e-15)

    def test_far_apart_points_give_zero(self):
        x = np.array([0.0, 5.0, 10.0, 20.0])
        loo = loo_density(x, radial_order3_kernel(1), 1.0, with_variance=True)
        assert np.all(loo.fhat == 0.0)
        assert np.all(loo.vhat == 0.0)
        assert loo.min_fhat == 0.0

    def test_three_points_match_brute_force(self):
        x = np.array([[0.1], [0.35], [0.5]])
        k = radial_order3_kernel(1)
        loo = loo_density(x, k, 0.5, with_variance=True)
        f, v = brute_force(x, k, 0.5)
        rel_close(loo.fhat, f)
        rel_close(loo.vhat, v)

    @pytest.mark.parametrize("d", [1, 2, 3])
    def test_naive_oracle_matches_brute_force(self, d):
        rng = np.random.default_rng(10 + d)
        x = rng.normal(size=(25, d))
        k = radial_order3_kernel(d)
        naive = loo_density_naive(x, k, 0.9, with_variance=True)
        f, v = brute_force(x, k, 0.9)
        rel_close(naive.fhat, f)
        rel_close(naive.vhat, v)

    @pytest.mark.parametrize("seed", range(12))
    def test_matches_naive_oracle(self, seed):
        rng = np.random.default_rng(seed)
        d = 1 + seed % 3
        n = int(rng.integers(3, 201))
        x = rng.normal(size=(n, d))
        k = (radial_order3_kernel if seed % 2 else epanechnikov_kernel)(d)
        h = float(rng.uniform(0.2, 1.5))
        fast = loo_density(x, k, h, with_variance=True)
        slow = loo_density_naive(x, k, h, with_variance=True)
        rel_close(fast.fhat, slow.fhat)
        rel_close(fast.vhat, slow.vhat)

    def test_multi_block_matches_naive(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(BLOCK + 77, 1))
        k = radial_order3_kernel(1)
        fast = loo_density(x, k, 0.3, with_variance=True)
        slow = loo_density_naive(x, k, 0.3, with_variance=True)
        rel_close(fast.fhat, slow.fhat)
        rel_close(fast.vhat, slow.vhat)

    def test_thread_count_does_not_change_bits(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=(3 * BLOCK + 5, 2))
        k = radial_order3_kernel(2)
        a = loo_density(x, k, 0.4, with_variance=True, threads=1)
        b = loo_density(x, k, 0.4, with_variance=True, threads=4)
        assert a.fhat.tobytes() == b.fhat.tobytes()
        assert a.vhat.tobytes() == b.vhat.tobytes()

    def test_kernel_sums_symmetric_reduction(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(BLOCK + 3, 1))
        k = epanechnikov_kernel(1)
        s1, s2 = kernel_sums(k, x, 0.5)
        slow = loo_density_naive(x, k, 0.5)
        rel_close(s1 / (x.shape[0] - 1), slow.fhat)
        assert np.all(s2 >= 0)

    def test_permutation_permutes_bitwise(self):
        rng = np.random.default_rng(6)
        x = rng.normal(size=(150, 2))
        k = radial_order3_kernel(2)
        base = loo_density(x, k, 0.6, with_variance=True)
        perm = rng.permutation(150)
        moved = loo_density(x[perm], k, 0.6, with_variance=True)
        assert moved.fhat.tobytes() == base.fhat[perm].tobytes()
        assert moved.vhat.tobytes() == base.vhat[perm].tobytes()

    @pytest.mark.parametrize("d", [1, 2])
    def test_scaling(self, d):
        rng = np.random.default_rng(7)
        x = rng.normal(size=(80, d))
        k = radial_order3_kernel(d)
        a = 2.5
        base = loo_density(x, k, 0.7)
        scaled = loo_density(a * x, k, a * 0.7)
        rel_close(scaled.fhat, base.fhat * a**-d, rtol=1e-12)

    def test_signed_kernel_can_go_negative(self):
        # X_2 sits where the order-3 kernel is negative relative to X_1
        loo = loo_density(np.array([0.0, 0.9]), radial_order3_kernel(1), 1.0)
        assert loo.min_fhat < 0

    def test_errors(self):
        k = radial_order3_kernel(1)
        with pytest.raises(SampleSizeError):
            loo_density(np.array([0.0]), k, 1.0)
        with pytest.raises(SampleSizeError):
            loo_density(np.array([0.0, 1.0]), k, 1.0, with_variance=True)
        with pytest.raises(ParameterError):
            loo_density(np.array([0.0, 1.0]), k, 0.0)
        with pytest.raises(ParameterError):
            loo_density(np.zeros((4, 2)), k, 1.0)

    def test_default_threads(self, monkeypatch):
        monkeypatch.delenv("KDEINT_THREADS", raising=False)
        assert default_threads() == 1
        monkeypatch.setenv("KDEINT_THREADS", "8")
        assert default_threads() == 8
        monkeypatch.setenv("KDEINT_THREADS", "zero")
        with pytest.raises(ParameterError):
            default_threads()
        monkeypatch.setenv("KDEINT_THREADS", "0")
        with pytest.raises(ParameterError):
            default_threads()


@settings(max_examples=40, deadline=None)
@given(
    arrays(np.float64, st.tuples(st.integers(3, 40), st.integers(1, 3)), elements=st.floats(-3, 3)),
    st.floats(0.05, 3.0),
)
def test_property_variance_nonnegative_and_oracle(x, h):
    k = radial_order3_kernel(x.shape[1])
    fast = loo_density(x, k, h, with_variance=True)
    slow = loo_density_naive(x, k, h, with_variance=True)
    assert np.all(fast.vhat >= 0)
    scale = max(float(np.max(np.abs(slow.fhat))), 1.0 / h ** x.shape[1])
    np.testing.assert_allclose(fast.fhat, slow.fhat, rtol=1e-12, atol=1e-12 * scale)


class TestMixture:
    def test_zero_weights(self):
        c = np.array([0.0, 1.0, 2.0])
        assert mixture_eval(c, np.zeros(3), epanechnikov_kernel(1), 0.5, 1.0) == 0.0

    def test_single_center(self):
        k = epanechnikov_kernel(1)
        assert mixture_eval(np.array([0.3]), np.array([2.0]), k, 0.5, 0.3) == pytest.approx(2.0 * 0.75 / 0.5, rel=1e-15)

    def test_vector_of_points(self):
        k = epanechnikov_kernel(1)
        c = np.array([0.0, 1.0])
        out = mixture_eval(c, np.array([1.0, 1.0]), k, 1.0, np.array([0.0, 0.5, 1.0]))
        assert out.shape == (3,)

    def test_matches_naive_sum(self):
        rng = np.random.default_rng(8)
        c = rng.normal(size=(60, 2))
        w = rng.normal(size=60)
        x = rng.normal(size=(30, 2))
        k = epanechnikov_kernel(2)
        out = mixture_eval(c, w, k, 0.8, x)
        naive = np.array([sum(w[i] * k.evaluate(((p - c[i]) / 0.8)[None, :])[0] / 0.64 for i in range(60)) for p in x])
        np.testing.assert_allclose(out, naive, rtol=1e-12, atol=1e-12 * np.max(np.abs(naive)))

    def test_integral_equals_weight_sum(self):
        c = np.array([0.0, 0.4, 1.3])
        w = np.array([0.5, -1.0, 2.0])
        h0 = 0.3
        k = epanechnikov_kernel(1)
        edges = np.sort(np.concatenate([c - h0, c + h0]))
        total = sum(
            integrate.quad(lambda t: mixture_eval(c, w, k, h0, t), a, b, epsabs=1e-13)[0]
            for a, b in zip(edges[:-1], edges[1:])
        )
        assert total == pytest.approx(w.sum(), abs=1e-10)

    def test_errors(self):
        k = epanechnikov_kernel(1)
        with pytest.raises(ParameterError):
            mixture_eval(np.zeros(3), np.zeros(2), k, 1.0, 0.0)
        with pytest.raises(ParameterError):
            mixture_eval(np.zeros(3), np.zeros(3), k, -1.0, 0.0)
        with pytest.raises(ParameterError):
            mixture_eval(np.zeros(3), np.zeros(3), k, 1.0, np.zeros((2, 2)))
