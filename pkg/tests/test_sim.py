import json

import numpy as np
import pytest
from scipy import stats
from scipy.special import ndtr

from npbroc import sim
from npbroc.exceptions import DataError
from npbroc.roc import RocCurve


class TestDgpConfig:
    def test_rejects_bad_parameters(self):
        with pytest.raises(ValueError):
            sim.DgpConfig(n=100, rho=1.0)
        with pytest.raises(ValueError):
            sim.DgpConfig(n=100, censor_rate=1.0)
        with pytest.raises(ValueError):
            sim.DgpConfig(n=100, biomarker_dist="cauchy")
        with pytest.raises(ValueError):
            sim.DgpConfig(n=100, time_dist="exponential")
        with pytest.raises(ValueError):
            sim.DgpConfig(n=0)

    def test_censoring_offset_bounds(self):
        with pytest.raises(ValueError):
            sim.censoring_offset(0.0)
        assert sim.censoring_offset(0.5) == 0.0


class TestGenerateDataset:
    def test_streams_are_deterministic_and_distinct(self):
        config = sim.DgpConfig(n=200, seed=11)
        a = sim.generate_dataset(config, stream=0)
        b = sim.generate_dataset(config, stream=0)
        c = sim.generate_dataset(config, stream=1)
        assert np.array_equal(a.y, b.y)
        assert np.array_equal(a.t_true, b.t_true)
        assert not np.array_equal(a.y, c.y)

    @pytest.mark.parametrize("time_dist", ["lognormal", "weibull", "gamma"])
    def test_censoring_rate_calibration(self, time_dist):
        config = sim.DgpConfig(n=100_000, time_dist=time_dist, censor_rate=0.3, seed=5)
        data = sim.generate_dataset(config)
        frac = np.mean(~np.isfinite(data.frame.t_upper))
        assert frac == pytest.approx(0.3, abs=0.01)

    def test_covariate_scenario_holds_rate_within_strata(self):
        config = sim.DgpConfig(
            n=200_000, censor_rate=0.3, covariate_effects=(0.5, 3.0), seed=2
        )
        data = sim.generate_dataset(config)
        censored = ~np.isfinite(data.frame.t_upper)
        for lo, hi in [(0.0, 0.25), (0.75, 1.0)]:
            sel = (data.x >= lo) & (data.x < hi)
            assert np.mean(censored[sel]) == pytest.approx(0.3, abs=0.02)

    @pytest.mark.parametrize(
        "biomarker_dist, dist",
        [
            ("normal", stats.norm()),
            ("chisq", stats.chi2(3)),
        ],
    )
    def test_biomarker_margin_matches_target(self, biomarker_dist, dist):
        config = sim.DgpConfig(n=40_000, biomarker_dist=biomarker_dist, seed=3)
        data = sim.generate_dataset(config)
        assert stats.kstest(data.y, dist.cdf).pvalue > 0.01

    def test_mixture_margin_matches_target(self):
        config = sim.DgpConfig(n=40_000, biomarker_dist="normal_mixture", seed=4)
        data = sim.generate_dataset(config)

        def cdf(v):
            return 0.5 * stats.norm(1.0, 1.0).cdf(v) + 0.5 * stats.norm(4.0, 1.5).cdf(v)

        assert stats.kstest(data.y, cdf).pvalue > 0.01

    def test_latent_correlation_is_preserved(self):
        config = sim.DgpConfig(n=100_000, rho=-0.5, censor_rate=0.0, seed=6)
        data = sim.generate_dataset(config)
        z1 = stats.norm.ppf(stats.rankdata(data.y) / (data.y.size + 1))
        z2 = stats.norm.ppf(stats.rankdata(data.t_true) / (data.y.size + 1))
        assert np.corrcoef(z1, z2)[0, 1] == pytest.approx(-0.5, abs=0.02)

    def test_zero_censoring_means_all_events_observed(self):
        data = sim.generate_dataset(sim.DgpConfig(n=500, censor_rate=0.0, seed=7))
        assert np.all(np.isfinite(data.frame.t_upper))
        assert np.array_equal(data.frame.t_lower, data.t_true)


class TestTrueRoc:
    def test_matches_monte_carlo_frequencies(self):
        config = sim.DgpConfig(n=1, rho=-0.5, biomarker_dist="chisq", time_dist="gamma")
        t = float(stats.gamma(1.5, scale=1 / 1.2).ppf(0.25))
        curve = sim.true_roc(config, t)
        rng = np.random.default_rng(12)
        m = 400_000
        z1 = rng.standard_normal(m)
        z2 = -0.5 * z1 + np.sqrt(0.75) * rng.standard_normal(m)
        y = stats.chi2(3).ppf(ndtr(z1))
        tt = stats.gamma(1.5, scale=1 / 1.2).ppf(ndtr(z2))
        ev = tt <= t
        for c_idx in [64, 256, 448]:
            y_thr = curve.thresholds[c_idx]  # already on the raw biomarker scale
            assert curve.tpr[c_idx] == pytest.approx(np.mean(y[ev] > y_thr), abs=0.006)
            assert curve.fpr[c_idx] == pytest.approx(np.mean(y[~ev] > y_thr), abs=0.006)

    def test_independence_gives_half_auc(self):
        config = sim.DgpConfig(n=1, rho=0.0)
        t = float(stats.weibull_min(1.4, scale=1 / 2.0).ppf(0.5))
        assert sim.true_auc(config, t) == pytest.approx(0.5, abs=1e-6)

    def test_covariate_profile_requires_x(self):
        config = sim.DgpConfig(n=1, covariate_effects=(0.5, 3.0))
        t = float(stats.weibull_min(1.4, scale=1 / 2.0).ppf(0.5))
        with pytest.raises(DataError):
            sim.true_roc(config, t)
        curve = sim.true_roc(config, t, x=0.5)
        assert 0.5 < curve.auc < 1.0


class TestRise:
    def test_known_analytic_value(self):
        p = np.linspace(0.0, 1.0, 20_001)
        a = RocCurve(horizon=1.0, x=None, thresholds=p, fpr=p, tpr=p, auc=0.5)
        b = RocCurve(horizon=1.0, x=None, thresholds=p, fpr=p, tpr=p**2, auc=1 / 3)
        # integral of (p - p^2)^2 over [0, 1] is 1/30
        assert sim.rise(a, b) == pytest.approx(np.sqrt(1.0 / 30.0), abs=1e-4)

    def test_zero_for_identical_curves(self):
        p = np.linspace(0.0, 1.0, 101)
        a = RocCurve(horizon=1.0, x=None, thresholds=p, fpr=p, tpr=np.sqrt(p), auc=2 / 3)
        assert sim.rise(a, a) == 0.0

    def test_rejects_empty(self):
        p = np.linspace(0.0, 1.0, 11)
        a = RocCurve(horizon=1.0, x=None, thresholds=p, fpr=p, tpr=p, auc=0.5)
        empty = RocCurve(
            horizon=1.0, x=None, thresholds=np.empty(0), fpr=np.empty(0), tpr=np.empty(0), auc=0.5
        )
        with pytest.raises(DataError):
            sim.rise(a, empty)


class TestEmpiricalBaseline:
    def test_tracks_the_truth_under_censoring(self):
        config = sim.DgpConfig(n=20_000, rho=-0.5, censor_rate=0.3, seed=9)
        data = sim.generate_dataset(config)
        t = float(stats.weibull_min(1.4, scale=1 / 2.0).ppf(0.5))
        est = sim.empirical_baseline_roc(data.frame, t)
        truth = sim.true_roc(config, t, grid_size=2048)
        assert sim.rise(est, truth) < 0.02
        assert np.all(np.diff(est.tpr) >= 0)
        assert np.all(np.diff(est.fpr) >= 0)


@pytest.fixture(scope="module")
def bench(tmp_path_factory):
    out = tmp_path_factory.mktemp("bench")
    scenarios = [dict(n=300, rho=-0.5, time_dist="weibull", censor_rate=0.3)]
    report = sim.run_benchmark(scenarios, replications=2, seed=42, out_dir=out)
    return out, report


class TestBenchmark:
    def test_writes_reports_and_summary_rows(self, bench):
        out, report = bench
        assert (out / "results.csv").exists()
        assert (out / "manifest.json").exists()
        assert not report["failures"]
        metrics = {(r["estimator"], r["metric"]) for r in report["rows"]}
        assert ("npb", "rise_median") in metrics
        assert ("empirical", "rise_median") in metrics
        assert ("oracle", "auc_true_q0.5") in metrics
        assert ("npb", "rho_mean") in metrics

    def test_manifest_replay_is_byte_identical(self, bench, tmp_path):
        out, _ = bench
        sim.run_benchmark_from_manifest(out / "manifest.json", tmp_path)
        assert (tmp_path / "results.csv").read_bytes() == (out / "results.csv").read_bytes()

    def test_manifest_records_the_grid(self, bench):
        out, _ = bench
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["seed"] == 42
        assert manifest["replications"] == 2
        assert manifest["scenarios"][0]["time_dist"] == "weibull"


class TestMisspecificationScenario:
    def test_censoring_rate_and_determinism(self):
        data = sim.misspecification_scenario(50_000, seed=1)
        frac = np.mean(~np.isfinite(data.frame.t_upper))
        assert frac == pytest.approx(0.3, abs=0.02)
        again = sim.misspecification_scenario(50_000, seed=1)
        assert np.array_equal(data.y, again.y)
        assert np.all(data.t_true > 0)

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            sim.misspecification_scenario(0, seed=1)
