import numpy as np
import pytest
from scipy.special import ndtr, ndtri

from npbroc.exceptions import DataError
from npbroc.margins import fit_marginal, fit_marginal_with_details, kaplan_meier

from conftest import linear_probit_margin


class TestMarginalModel:
    def test_cdf_quantile_round_trip_with_covariates(self):
        m = linear_probit_margin(beta=(0.8,))
        p = np.array([0.1, 0.4, 0.7, 0.95])
        x = np.tile([[0.5]], (4, 1))
        v = m.quantile(p, x)
        assert np.allclose(m.cdf(v, x), p, atol=1e-8)

    def test_covariate_shift_moves_distribution(self):
        m = linear_probit_margin(beta=(1.0,))
        assert m.cdf(0.0, np.array([1.0])) == pytest.approx(ndtr(-1.0), abs=1e-10)
        assert m.cdf(0.0, np.array([0.0])) == pytest.approx(0.5, abs=1e-10)


class TestFitMarginal:
    def test_recovers_normal_cdf_from_exact_data(self, rng):
        y = rng.standard_normal(800)
        m = fit_marginal(y, y)
        grid = np.array([-1.5, -0.5, 0.0, 0.5, 1.5])
        assert np.max(np.abs(m.cdf(grid) - ndtr(grid))) < 0.06

    def test_right_censoring_does_not_bias_the_fit(self, rng):
        t = rng.standard_normal(1000) + 5.0
        c = rng.standard_normal(1000) + 5.5
        lower = np.minimum(t, c)
        upper = np.where(t <= c, t, np.inf)
        m = fit_marginal(lower, upper)
        grid = 5.0 + np.array([-1.0, -0.3, 0.0, 0.3, 1.0])
        assert np.max(np.abs(m.cdf(grid) - ndtr(grid - 5.0))) < 0.06

    def test_detection_limit_rows_enter_as_left_intervals(self, rng):
        y = rng.standard_normal(800)
        lod = np.quantile(y, 0.2)
        lower = np.where(y < lod, -np.inf, y)
        upper = np.where(y < lod, lod, y)
        m = fit_marginal(lower, upper)
        grid = np.array([-0.5, 0.0, 0.8, 1.5])
        assert np.max(np.abs(m.cdf(grid) - ndtr(grid))) < 0.06

    def test_recovers_covariate_coefficient(self, rng):
        n = 1200
        x = rng.uniform(size=(n, 1))
        y = rng.standard_normal(n) + 0.9 * x[:, 0]
        m = fit_marginal(y, y, x, covariate_names=("x",))
        assert m.beta[0] == pytest.approx(0.9, abs=0.15)

    def test_log_scale_auto_picks_log_for_skewed_positive_data(self, rng):
        y = rng.lognormal(size=400)
        m = fit_marginal(y, y)
        assert m.transform.basis.log_scale
        z = rng.standard_normal(400)
        m2 = fit_marginal(z, z)
        assert not m2.transform.basis.log_scale

    def test_gradient_norm_below_tolerance(self, rng):
        y = rng.standard_normal(500)
        _, details = fit_marginal_with_details(y, y)
        assert details.converged
        assert details.gradient_norm < 1e-6

    def test_rejects_degenerate_and_tiny_samples(self):
        with pytest.raises(DataError):
            fit_marginal(np.ones(50), np.ones(50))
        with pytest.raises(DataError):
            fit_marginal(np.arange(3.0), np.arange(3.0))

    def test_latent_is_probit_quantile_of_cdf(self, rng):
        y = rng.standard_normal(500)
        m = fit_marginal(y, y, link="logit")
        grid = np.array([-1.0, 0.0, 1.0])
        assert np.allclose(m.latent(grid), ndtri(m.cdf(grid)), atol=1e-10)


class TestKaplanMeier:
    def test_product_limit_by_hand(self):
        times = np.array([1.0, 2.0, 3.0, 4.0, 5.0])
        events = np.array([True, True, False, True, False])
        km = kaplan_meier(times, events)
        # survival after each death: 4/5, then 3/4, then (censor), then 1/2
        assert km.survival_at(1.0) == pytest.approx(4 / 5)
        assert km.survival_at(2.5) == pytest.approx(4 / 5 * 3 / 4)
        assert km.survival_at(4.5) == pytest.approx(4 / 5 * 3 / 4 * 1 / 2)
        assert km.survival_at(0.5) == 1.0

    def test_deaths_precede_censorings_at_ties(self):
        km = kaplan_meier(np.array([2.0, 2.0]), np.array([True, False]))
        # the death at t=2 still has both subjects at risk
        assert km.survival_at(2.0) == pytest.approx(0.5)

    def test_no_censoring_matches_empirical_survival(self, rng):
        t = rng.exponential(size=200)
        km = kaplan_meier(t, np.ones(200, dtype=bool))
        grid = np.quantile(t, [0.2, 0.5, 0.8])
        emp = np.array([(t > g).mean() for g in grid])
        assert np.allclose(km.survival_at(grid), emp, atol=1e-12)

    def test_cdf_is_complement(self, rng):
        t = rng.exponential(size=50)
        km = kaplan_meier(t, rng.random(50) < 0.7)
        g = np.linspace(0, 3, 10)
        assert np.allclose(km.cdf_at(g), 1.0 - km.survival_at(g), atol=1e-15)

    def test_input_validation(self):
        with pytest.raises(DataError):
            kaplan_meier(np.array([]), np.array([]))
        with pytest.raises(DataError):
            kaplan_meier(np.array([1.0, -2.0]), np.array([True, True]))
        with pytest.raises(DataError):
            kaplan_meier(np.array([1.0]), np.array([True, False]))
