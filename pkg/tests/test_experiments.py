import json
import math
from fractions import Fraction

import numpy as np
import pytest

from kdeint.errors import ParameterError, ParseError, SampleSizeError, WindowError
from kdeint.estimators import FunctionalT
from kdeint.experiments import (
    DEFAULT_SEED,
    ExperimentConfig,
    ReplicationRow,
    _closer,
    calibrate_h_constant,
    check_window,
    default_regression_model,
    fit_slope,
    nonsmooth_window,
    regression_window,
    require_window,
    run_benchmark,
    run_clt_nonsmooth,
    run_clt_smooth,
    run_functional_experiment,
    run_rate_check,
    run_regression_experiment,
    smooth_window,
    summarize,
)
from kdeint.bandwidth import rule_of_thumb_h0
from kdeint.models import get_model, stream


class TestConfig:
    def test_defaults(self):
        cfg = ExperimentConfig()
        assert cfg.seed == DEFAULT_SEED == 42
        assert cfg.variants == ("plain", "corrected", "monte-carlo")
        assert not cfg.effective_trim_box
        assert ExperimentConfig(model="model2").effective_trim_box

    def test_round_trip(self):
        cfg = ExperimentConfig(model="model2", d=2, n=50, variants=["corrected", "trimmed-plain"], trim_threshold=0.01)
        assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg
        assert cfg.to_dict()["schema"] == 1

    def test_from_json(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text(json.dumps({"schema": 1, "n": 40, "replications": 2}))
        cfg = ExperimentConfig.from_json(p)
        assert cfg.n == 40 and cfg.replications == 2

    def test_bad_json_has_line(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text('{\n  "n": 40,\n  oops\n}')
        with pytest.raises(ParseError) as info:
            ExperimentConfig.from_json(p)
        assert info.value.line == 3

    @pytest.mark.parametrize(
        "doc",
        [
            {"schema": 2},
            {"unknown_key": 1},
            {"model": "model9"},
            {"d": 0},
            {"n": 2},
            {"replications": 0},
            {"variants": []},
            {"variants": ["best"]},
            {"bandwidth": "magic"},
            {"bandwidth": "fixed"},
            {"bandwidth": "fixed", "h": -1.0},
            {"h_exponent": 1.5},
            {"variants": ["trimmed-plain"]},
            {"trim_with": "both"},
            {"threads": 0},
            {"seed": -1},
            {"phi": "nope"},
        ],
    )
    def test_rejections(self, doc):
        with pytest.raises(ParameterError):
            ExperimentConfig.from_dict(doc)

    def test_n_too_small_code(self):
        with pytest.raises(SampleSizeError):
            ExperimentConfig(n=2)

    def test_threads_from_environment(self, monkeypatch):
        monkeypatch.setenv("KDEINT_THREADS", "3")
        assert ExperimentConfig().effective_threads == 3
        assert ExperimentConfig(threads=2).effective_threads == 2


class TestSummary:
    def rows(self, values, status=None):
        status = status or ["ok"] * len(values)
        return [ReplicationRow(i, 10, 1, "v", x, 0.1, 10, 0.5, st) for i, (x, st) in enumerate(zip(values, status))]

    def test_quartiles_and_errors(self):
        vals = [0.9, 1.1, 1.0, 1.3, 0.7]
        (s,) = summarize(self.rows(vals), 1.0)
        assert s.count == 5 and s.excluded == 0
        assert s.minimum == 0.7 and s.maximum == 1.3
        assert s.median == 1.0
        assert s.q1 == pytest.approx(0.9) and s.q3 == pytest.approx(1.1)
        assert s.mean == pytest.approx(1.0)
        assert s.rmse == pytest.approx(math.sqrt(np.mean((np.array(vals) - 1) ** 2)))
        assert s.bias == pytest.approx(0.0, abs=1e-15)

    def test_failed_rows_excluded(self):
        (s,) = summarize(self.rows([1.0, None, 2.0], ["ok", "DEGENERATE_DENSITY", "ok"]), 1.5)
        assert s.count == 2 and s.excluded == 1

    def test_all_failed(self):
        (s,) = summarize(self.rows([None], ["EMPTY_SUM"]), 1.0)
        assert s.count == 0 and math.isnan(s.mean)

    def test_variant_order_preserved(self):
        rows = [ReplicationRow(0, 5, 1, v, 1.0, None, 5, None) for v in ("b", "a", "c")]
        assert [s.variant for s in summarize(rows, 1.0)] == ["b", "a", "c"]


class TestWindows:
    def test_smooth_window_d1(self):
        # n h^2 -> inf, n h^3.5 -> 0, n h^6 -> 0: gamma in (2/7, 1/2)
        w = smooth_window(1)
        assert check_window(w, 0.4) == []
        assert check_window(w, 0.3) == []
        assert check_window(w, Fraction(2, 7)) != []
        assert check_window(w, 0.2857) != []
        assert check_window(w, 0.5) != []

    def test_nonsmooth_window(self):
        # n h^2 -> inf, n h^5 -> 0: gamma in (1/5, 1/2)
        w = nonsmooth_window(1)
        assert check_window(w, 0.3) == []
        assert check_window(w, 0.2) != []
        assert check_window(w, 0.5) != []

    def test_regression_window(self):
        # n^(1/2) h^3 -> 0, n^(1/2) h -> inf: gamma in (1/6, 1/2)
        w = regression_window(1)
        assert check_window(w, 0.2) == []
        assert check_window(w, Fraction(1, 6)) != []
        assert check_window(w, 0.5) != []

    def test_exact_boundary_arithmetic(self):
        # 0.1 + 0.2 style rounding must not leak into the comparison
        assert check_window([(1, 10, 0)], 0.1) != []
        assert check_window([(1, 10, math.inf)], 0.1) != []

    def test_require_window(self):
        with pytest.raises(WindowError) as info:
            require_window(smooth_window(1), 0.6, "smooth CLT")
        assert info.value.code == "BANDWIDTH_WINDOW"

    def test_runners_check_windows(self):
        with pytest.raises(WindowError):
            run_clt_smooth(n=50, reps=3, gamma=0.2)
        with pytest.raises(WindowError):
            run_clt_nonsmooth(n=50, reps=3, gamma=0.1)
        with pytest.raises(WindowError):
            run_regression_experiment(n=50, reps=3, gamma=0.6)


class TestBenchmark:
    def test_monte_carlo_density_ratio_is_one(self):
        cfg = ExperimentConfig(model="model2", d=1, n=30, replications=1, variants=("monte-carlo",), phi="constant-on-box:0,1")
        res = run_benchmark(cfg)
        assert res.rows[0].estimate == 1.0

    def test_paired_samples_and_row_order(self):
        cfg = ExperimentConfig(n=120, replications=3, variants=("plain", "corrected", "trimmed-corrected", "monte-carlo"), trim_threshold=1e-3, grid_size=5)
        res = run_benchmark(cfg)
        assert [(r.replication, r.variant) for r in res.rows] == [
            (i, v) for i in range(3) for v in cfg.variants
        ]
        # variants of one replication share the sample and the corrected bandwidth
        for i in range(3):
            rows = {r.variant: r for r in res.rows if r.replication == i}
            assert rows["corrected"].h == rows["trimmed-corrected"].h
            assert rows["corrected"].min_fhat == rows["trimmed-corrected"].min_fhat

    def test_seed_determinism_across_threads(self):
        base = dict(n=150, replications=4, grid_size=5)
        a = run_benchmark(ExperimentConfig(threads=1, **base))
        b = run_benchmark(ExperimentConfig(threads=3, **base))
        strip = lambda rows: [(r.replication, r.variant, r.estimate, r.h, r.n_used, r.min_fhat, r.status) for r in rows]
        assert strip(a.rows) == strip(b.rows)
        c = run_benchmark(ExperimentConfig(threads=1, seed=7, **base))
        assert strip(a.rows) != strip(c.rows)

    def test_fixed_bandwidth_policy(self):
        cfg = ExperimentConfig(n=100, replications=2, bandwidth="fixed", h_exponent=0.25, h_constant=1.0, variants=("plain",))
        res = run_benchmark(cfg)
        assert all(r.h == 100 ** -0.25 for r in res.rows)

    def test_rule_of_thumb_policy(self):
        cfg = ExperimentConfig(n=100, replications=1, bandwidth="rule-of-thumb", variants=("plain",))
        res = run_benchmark(cfg)
        s = get_model("model1").sample(100, 1, stream(42, 0))
        assert res.rows[0].h == rule_of_thumb_h0(s)

    def test_errors_become_status(self):
        cfg = ExperimentConfig(n=20, replications=2, bandwidth="fixed", h=1e-4, variants=("plain", "trimmed-plain", "monte-carlo"), trim_threshold=1.0)
        res = run_benchmark(cfg)
        statuses = {r.variant: r.status for r in res.rows if r.replication == 0}
        assert statuses == {"plain": "DEGENERATE_DENSITY", "trimmed-plain": "EMPTY_SUM", "monte-carlo": "ok"}
        plain = res.variant("plain")
        assert plain.count == 0 and plain.excluded == 2

    def test_writes_bundle(self, tmp_path):
        cfg = ExperimentConfig(n=60, replications=3, grid_size=3, out_dir=str(tmp_path / "out"))
        run_benchmark(cfg)
        names = sorted(p.name for p in (tmp_path / "out").iterdir())
        assert names == ["boxes.svg", "rows.csv", "summary.csv", "timings.csv"]
        assert "wall_time" not in (tmp_path / "out" / "rows.csv").read_text()


class TestRate:
    def test_fit_slope_exact_power_law(self):
        n = np.array([100, 200, 400, 800])
        slope, se, lo, hi = fit_slope(n, 3.0 * n**-0.75)
        assert slope == pytest.approx(-0.75, abs=1e-12)
        assert se == pytest.approx(0.0, abs=1e-12)
        assert lo <= slope <= hi

    def test_fit_needs_three_points(self):
        with pytest.raises(ParameterError):
            fit_slope([10, 20], [1.0, 0.5])
        with pytest.raises(ParameterError):
            run_rate_check("model1", 1, 0.3, [100, 200], 2)

    def test_calibration(self):
        c = calibrate_h_constant("model1", 1, 250, 0.3, seed=1)
        s = get_model("model1").sample(250, 1, stream(1, 2**32 - 1))
        assert c * 250 ** -0.3 == pytest.approx(rule_of_thumb_h0(s), rel=1e-14)

    def test_small_run(self):
        check = run_rate_check("model1", 1, 0.2857, [100, 200, 400], 4, seed=3)
        assert set(check.fits) == {"corrected", "monte-carlo"}
        assert len(check.rows) == 3 * 4 * 2
        assert check.fits["monte-carlo"].n_grid == (100, 200, 400)
        assert all(r.h == pytest.approx(check.h_constant * r.n ** -0.2857) for r in check.rows if r.variant == "corrected")

    def test_rate_streams_keyed_by_n(self):
        a = run_rate_check("model1", 1, 0.3, [50, 60, 70], 2, variants=("monte-carlo",), seed=5, h_constant=1.0)
        b = run_rate_check("model1", 1, 0.3, [50, 60, 80], 2, variants=("monte-carlo",), seed=5, h_constant=1.0)
        assert [r.estimate for r in a.rows if r.n != 70] == [r.estimate for r in b.rows if r.n != 80]


class TestClt:
    def test_closer(self):
        assert _closer(1.2, 0.6, "1x", "2x") == "1x"
        assert _closer(1.8, 0.9, "1x", "2x") == "2x"
        assert _closer(math.nan, 0.9, "1x", "2x") == "2x"

    def test_smooth_small(self):
        s = run_clt_smooth(n=200, reps=6, seed=1)
        assert s.kind == "smooth" and s.replications == 6
        assert s.h == 200 ** -0.4
        assert s.alternative == "2x"
        assert s.alternative_variance == 2 * s.theoretical_variance
        assert s.theoretical_variance == pytest.approx(s.extras["vk"] * s.extras["phi2_over_f2"])
        assert s.statistics.shape == (6,)
        assert s.matches in ("1x", "2x")
        d = s.to_dict()
        assert "statistics" not in d and "rows" not in d

    def test_smooth_only_d1(self):
        with pytest.raises(ParameterError):
            run_clt_smooth(d=2, n=100, reps=3, gamma=0.3)

    def test_nonsmooth_small(self):
        s = run_clt_nonsmooth(n=200, reps=5, seed=2)
        L = s.extras["boundary_constant"]
        assert s.theoretical_variance == 2 * L
        f = get_model("model1").marginal
        assert s.alternative_variance == pytest.approx(2 * L * (1 / f(0.2) + 1 / f(0.8)))

    def test_nonsmooth_interval_validation(self):
        with pytest.raises(ParameterError):
            run_clt_nonsmooth(n=100, reps=3, interval=(0.8, 0.2))
        with pytest.raises(ParameterError):
            run_clt_nonsmooth(n=100, reps=3, interval=(0.0, 0.5), model="model2")

    def test_regression_theory(self):
        s = run_regression_experiment(n=200, reps=5, sigma=0.5, seed=3)
        # c = int cos(2 pi x) 2 sin(pi x)^2 dx = -1/2
        assert s.extras["c"] == pytest.approx(-0.5, abs=1e-12)
        assert s.theoretical_variance > s.alternative_variance > 0

    def test_regression_noise_free(self):
        s = run_regression_experiment(n=200, reps=5, sigma=0.0, seed=3)
        assert s.theoretical_variance == 0.0
        assert math.isnan(s.ratio)

    def test_regression_model_sampling(self):
        m = default_regression_model(0.0)
        s = m.sample(50, stream(0, 0))
        np.testing.assert_array_equal(s.responses, np.cos(2 * np.pi * s.points[:, 0]))

    def test_negative_sigma(self):
        with pytest.raises(ParameterError):
            run_regression_experiment(n=100, reps=3, sigma=-1.0)


def test_functional_experiment_small():
    t = FunctionalT(lambda x, y: y * np.all((x >= 0) & (x <= 1), axis=1), "mass")
    check = run_functional_experiment(t, 1.0, [100, 200], 4, seed=1)
    assert check.n_grid == (100, 200)
    assert len(check.rows) == 8
    # y / fhat is exactly 1 at every point of a uniform design
    assert all(r.estimate == 1.0 for r in check.rows)
    assert check.scaled_variance == (0.0, 0.0)


def test_clt_needs_successful_rows():
    with pytest.raises(SampleSizeError):
        run_clt_nonsmooth(n=10, reps=2, seed=1)
