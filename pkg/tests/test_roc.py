import csv

import numpy as np
import pytest
from scipy.special import ndtr

from npbroc import roc
from npbroc.exceptions import NumericError

from conftest import latent_normal_model


@pytest.fixture(scope="module")
def latent_draws():
    rng = np.random.default_rng(0)
    n = 500_000
    z1 = rng.standard_normal(n)
    noise = rng.standard_normal(n)
    return z1, noise


def _z2(z1, noise, rho):
    return rho * z1 + np.sqrt(1 - rho * rho) * noise


class TestIndependence:
    def test_accuracy_reduces_to_marginal_tail(self):
        model = latent_normal_model(0.0)
        assert roc.cumulative_sensitivity(model, 0.7, 1.0) == pytest.approx(1 - ndtr(0.7), abs=1e-12)
        assert roc.dynamic_specificity(model, 0.7, 1.0) == pytest.approx(ndtr(0.7), abs=1e-12)

    def test_roc_is_the_diagonal_and_auc_half(self):
        model = latent_normal_model(0.0)
        curve = roc.roc_curve(model, 1.0)
        assert np.max(np.abs(curve.tpr - curve.fpr)) < 1e-10
        assert curve.auc == pytest.approx(0.5, abs=1e-6)

    def test_youden_flags_flat_curve(self):
        y = roc.youden(latent_normal_model(0.0), 1.0)
        assert y.flat
        assert y.index < 1e-9


class TestAgainstMonteCarlo:
    def test_sensitivity_specificity_auc(self, latent_draws):
        rho = -0.5
        model = latent_normal_model(rho)
        z1, noise = latent_draws
        z2 = _z2(z1, noise, rho)
        c, t = 0.4, 1.2  # horizon on the raw scale equals the latent scale here
        ev = z2 <= t
        assert roc.cumulative_sensitivity(model, c, t) == pytest.approx(np.mean(z1[ev] > c), abs=0.004)
        assert roc.dynamic_specificity(model, c, t) == pytest.approx(np.mean(z1[~ev] <= c), abs=0.004)
        cases = z1[ev][:150_000]
        ctrls = z1[~ev][:150_000]
        m = min(cases.size, ctrls.size)
        assert roc.auc(model, t) == pytest.approx(np.mean(cases[:m] > ctrls[:m]), abs=0.005)

    def test_covariate_profile_shifts_both_margins(self, latent_draws):
        rho = -0.5
        model = latent_normal_model(rho, beta_y=(0.8,), beta_t=(-0.4,))
        z1, noise = latent_draws
        z2 = _z2(z1, noise, rho)
        # at x = 1 the thresholds and horizon shift by the coefficients
        ev = z2 <= 1.2 + 0.4
        se = roc.cumulative_sensitivity(model, 0.4, 1.2, x=[1.0])
        assert se == pytest.approx(np.mean(z1[ev] > 0.4 - 0.8), abs=0.004)

    def test_incident_sensitivity_matches_conditional_slice(self, latent_draws):
        rho = -0.5
        model = latent_normal_model(rho)
        z1, noise = latent_draws
        z2 = _z2(z1, noise, rho)
        sel = np.abs(z2 - 0.3) < 0.02
        inc = roc.incident_sensitivity(model, 0.4, 0.3)
        assert inc == pytest.approx(np.mean(z1[sel] > 0.4), abs=0.02)
        # closed-form midpoint: threshold at the conditional mean gives 1/2
        assert roc.incident_sensitivity(model, rho * 0.3, 0.3) == pytest.approx(0.5, abs=1e-12)

    def test_conditional_survival_ordering_and_totals(self, latent_draws):
        rho = -0.5
        model = latent_normal_model(rho)
        z1, noise = latent_draws
        z2 = _z2(z1, noise, rho)
        t = 0.2
        s_all = roc.conditional_survival_given_marker_range(model, -np.inf, np.inf, t)
        assert s_all == pytest.approx(1 - ndtr(t), abs=1e-12)
        q1, q2 = -0.4307, 0.4307
        s_lo = roc.conditional_survival_given_marker_range(model, -np.inf, q1, t)
        s_mid = roc.conditional_survival_given_marker_range(model, q1, q2, t)
        s_hi = roc.conditional_survival_given_marker_range(model, q2, np.inf, t)
        assert s_lo >= s_mid >= s_hi
        assert s_mid == pytest.approx(np.mean(z2[(z1 > q1) & (z1 <= q2)] > t), abs=0.01)


class TestCurveStructure:
    def test_curve_runs_corner_to_corner_monotonically(self):
        curve = roc.roc_curve(latent_normal_model(-0.6), 0.5)
        assert (curve.fpr[0], curve.tpr[0]) == (0.0, 0.0)
        assert (curve.fpr[-1], curve.tpr[-1]) == (1.0, 1.0)
        assert np.all(np.diff(curve.fpr) >= 0)
        assert np.all(np.diff(curve.tpr) >= 0)
        assert np.all(np.diff(curve.thresholds) <= 0)

    def test_grid_refinement_changes_auc_negligibly(self):
        model = latent_normal_model(-0.5)
        assert abs(roc.auc(model, 0.7, grid_size=512) - roc.auc(model, 0.7, grid_size=4096)) < 1e-4

    def test_exhaustivity_identity(self):
        model = latent_normal_model(-0.5)
        t = 0.2
        f_t = ndtr(t)
        for c in (-1.2, 0.0, 0.9):
            se = roc.cumulative_sensitivity(model, c, t)
            sp = roc.dynamic_specificity(model, c, t)
            assert se * f_t + (1 - sp) * (1 - f_t) == pytest.approx(1 - ndtr(c), abs=1e-10)

    def test_correlation_sign_symmetry(self):
        up = roc.auc(latent_normal_model(0.5), 0.0)
        down = roc.auc(latent_normal_model(-0.5), 0.0)
        assert up + down == pytest.approx(1.0, abs=1e-9)

    def test_near_degenerate_correlation_is_nearly_perfect(self):
        curve = roc.roc_curve(latent_normal_model(-0.999), 0.0)
        assert np.interp(0.1, curve.fpr, curve.tpr) > 0.99

    def test_horizon_outside_support_raises(self):
        model = latent_normal_model(-0.5)
        with pytest.raises(NumericError):
            roc.auc(model, -40.0)


class TestYouden:
    def test_symmetric_configuration_threshold_at_median(self):
        y = roc.youden(latent_normal_model(-0.5), 0.0)
        assert y.threshold == pytest.approx(0.0, abs=0.001)
        assert not y.flat
        assert y.index == pytest.approx(y.sensitivity + y.specificity - 1.0, abs=1e-12)

    def test_threshold_maximizes_the_objective(self):
        model = latent_normal_model(-0.6)
        t = 0.4
        y = roc.youden(model, t)
        for delta in (-0.05, 0.05):
            c = y.threshold + delta
            j = roc.cumulative_sensitivity(model, c, t) + roc.dynamic_specificity(model, c, t) - 1
            assert j <= y.index + 1e-10


class TestIncidentStatic:
    def test_static_specificity_at_matching_horizon(self):
        model = latent_normal_model(-0.5)
        curve = roc.incident_static_roc(model, 0.3, 0.3)
        sp_dyn = roc.dynamic_specificity(model, curve.thresholds[5], 0.3)
        assert 1 - curve.fpr[5] == pytest.approx(sp_dyn, abs=1e-9)

    def test_incident_is_the_narrow_window_limit(self):
        model = latent_normal_model(-0.5)
        c, t, eps = 0.4, 0.3, 1e-4
        inc = roc.incident_sensitivity(model, c, t)
        num = (
            roc.cumulative_sensitivity(model, c, t + eps) * ndtr(t + eps)
            - roc.cumulative_sensitivity(model, c, t) * ndtr(t)
        )
        assert inc == pytest.approx(num / (ndtr(t + eps) - ndtr(t)), abs=1e-3)


class TestExport:
    def test_csv_round_trip_of_curve_points(self, tmp_path):
        curves = [roc.roc_curve(latent_normal_model(-0.5), 0.5, grid_size=16)]
        path = tmp_path / "roc.csv"
        roc.export_roc_csv(curves, path)
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == curves[0].fpr.size
        assert float(rows[3]["tpr"]) == pytest.approx(curves[0].tpr[3])
