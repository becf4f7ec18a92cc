import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import ndtr

from npbroc.bernstein import BernsteinBasis
from npbroc.bvn import bvn_pdf, rectangle_probability
from npbroc.exceptions import DataError
from npbroc.joint import (
    Dependence,
    FitConfig,
    JointLikelihood,
    NpbModel,
    Observation,
    ObservationFrame,
    confidence_intervals,
    fit,
    lambda_to_rho,
    loglik,
    loglik_censored,
    loglik_exact,
    rho_to_lambda,
)
from npbroc.serialize import load_model, model_from_dict, model_to_dict, save_model

from conftest import latent_normal_model, mixed_censoring_frame


def _finite_difference_gradient(value_and_grad, theta, eps=1e-6):
    fd = np.empty_like(theta)
    for j in range(theta.size):
        up = theta.copy()
        dn = theta.copy()
        up[j] += eps
        dn[j] -= eps
        fd[j] = (value_and_grad(up)[0] - value_and_grad(dn)[0]) / (2 * eps)
    return fd


def _reasonable_theta(lik, rng):
    """Random parameters keeping the link scale within (-3, 3).

    Far outside that range the mapped latent values saturate in double
    precision (especially for the double-exponential upper tail), where the
    computed CDF no longer follows the analytic derivative.
    """
    k_y, k_t = lik.basis_y.size, lik.basis_t.size
    lay = lik.layout
    raw_y = np.concatenate([[-3.0], np.log(np.full(k_y - 1, 6.0 / (k_y - 1)))])
    raw_t = np.concatenate([[-3.0], np.log(np.full(k_t - 1, 6.0 / (k_t - 1)))])
    theta = np.concatenate([
        raw_y, raw_t,
        0.3 * rng.standard_normal(lay.p_y + lay.p_t + lay.dep_dim),
    ])
    return theta + 0.05 * rng.standard_normal(theta.size)


class TestScore:
    @pytest.mark.parametrize("link", ["probit", "logit", "cloglog"])
    @pytest.mark.parametrize("dep_form", ["constant", "covariate", "none"])
    def test_analytic_gradient_matches_finite_differences(self, rng, link, dep_form):
        frame = mixed_censoring_frame(rng, 80, beta_y=(0.5,), beta_t=(-0.3,))
        basis_y = BernsteinBasis(4, -5.0, 5.0)
        basis_t = BernsteinBasis(4, -1.0, 9.0)
        lik = JointLikelihood(frame, basis_y, basis_t, link_y=link, link_t=link, dep_form=dep_form)
        for _ in range(3):
            theta = _reasonable_theta(lik, rng)
            ll, grad = lik.value_and_grad(theta)
            assert np.isfinite(ll)
            fd = _finite_difference_gradient(lik.value_and_grad, theta)
            scale = np.maximum(np.abs(fd), 1.0)
            assert np.max(np.abs(grad - fd) / scale) < 1e-6


class TestLikelihoodIdentities:
    def test_exact_row_is_bivariate_normal_log_density(self):
        model = latent_normal_model(-0.5)
        for y, t in [(0.3, 0.8), (-1.2, 1.5), (0.0, 0.0)]:
            expected = np.log(bvn_pdf(y, t, -0.5))
            assert loglik_exact(model, Observation.exact(y, t)) == pytest.approx(expected, abs=1e-10)

    def test_double_interval_row_is_rectangle_probability(self):
        model = latent_normal_model(-0.6)
        obs = Observation(-0.5, 0.7, 0.2, 1.4)
        expected = np.log(rectangle_probability(-0.5, 0.7, 0.2, 1.4, -0.6))
        assert loglik_censored(model, obs) == pytest.approx(expected, abs=1e-10)

    def test_right_censored_row_conditional_survival_form(self):
        rho = -0.5
        model = latent_normal_model(rho)
        y, t = 0.4, 0.9
        cond = 1.0 - ndtr((t - rho * y) / np.sqrt(1 - rho * rho))
        expected = np.log(np.exp(-0.5 * y * y) / np.sqrt(2 * np.pi) * cond)
        assert loglik_censored(model, Observation.right_censored(y, t)) == pytest.approx(expected, abs=1e-10)

    def test_shrinking_interval_converges_to_exact_density(self):
        model = latent_normal_model(-0.5)
        y, t = 0.3, 0.4
        exact = loglik_exact(model, Observation.exact(y, t))
        for eps, tol in [(1e-2, 1e-1), (1e-4, 1e-2), (1e-6, 1e-3)]:
            obs = Observation(y - eps, y + eps, t - eps, t + eps)
            approx = loglik_censored(model, obs) - np.log(4 * eps * eps)
            assert abs(approx - exact) < tol

    def test_total_loglik_is_permutation_invariant(self, rng):
        model = latent_normal_model(-0.4)
        frame = mixed_censoring_frame(rng, 60)
        perm = rng.permutation(60)
        shuffled = ObservationFrame(
            frame.y_lower[perm], frame.y_upper[perm], frame.t_lower[perm], frame.t_upper[perm]
        )
        assert loglik(model, frame) == pytest.approx(loglik(model, shuffled), rel=1e-14)


class TestDependence:
    @settings(max_examples=100, deadline=None)
    @given(rho=st.floats(-0.999, 0.999))
    def test_lambda_transform_round_trip(self, rho):
        assert lambda_to_rho(rho_to_lambda(rho)) == pytest.approx(rho, abs=1e-12)

    def test_lambda_sign_convention(self):
        # positive lambda encodes negative correlation
        assert lambda_to_rho(1.0) == pytest.approx(-1.0 / np.sqrt(2.0))
        assert lambda_to_rho(0.0) == 0.0

    def test_covariate_form_varies_with_x(self):
        dep = Dependence(form="covariate", alpha=0.5, gamma=np.array([1.0]))
        r1 = dep.rho(np.array([[0.0], [1.0]]))
        assert r1[0] == pytest.approx(lambda_to_rho(0.5))
        assert r1[1] == pytest.approx(lambda_to_rho(1.5))

    def test_none_form_is_independence(self):
        dep = Dependence(form="none")
        assert dep.rho() == 0.0

    def test_unknown_form_rejected(self):
        with pytest.raises(ValueError):
            Dependence(form="clayton")


class TestObservationFrame:
    def test_rejects_inverted_bounds_and_negative_times(self):
        with pytest.raises(DataError):
            ObservationFrame([1.0], [0.5], [1.0], [2.0])
        with pytest.raises(DataError):
            ObservationFrame([0.0], [0.0], [-1.0], [2.0])

    def test_rejects_nonfinite_covariates(self):
        with pytest.raises(DataError):
            ObservationFrame([0.0], [0.0], [1.0], [2.0], np.array([[np.nan]]), ("x",))

    def test_rejects_uninformative_biomarker(self):
        with pytest.raises(DataError):
            ObservationFrame([-np.inf], [np.inf], [1.0], [2.0])


class TestFit:
    def test_recovers_parameters_with_covariates(self, rng):
        frame = mixed_censoring_frame(
            rng, 1500, rho=-0.5, beta_y=(0.8,), beta_t=(-0.5,),
            fractions=(0.6, 0.4, 0.0, 0.0),
        )
        res = fit(frame)
        model = res.model
        assert res.gradient_norm < 1e-6
        assert model.rho() == pytest.approx(-0.5, abs=0.08)
        assert model.margin_y.beta[0] == pytest.approx(0.8, abs=0.25)
        assert model.margin_t.beta[0] == pytest.approx(-0.5, abs=0.25)
        # the reported optimum equals an independent likelihood evaluation
        assert loglik(model, frame) == pytest.approx(res.loglik, rel=1e-10)

    def test_wald_and_sampled_intervals_agree_for_rho(self, rng):
        frame = mixed_censoring_frame(rng, 1000, rho=-0.5, fractions=(0.7, 0.3, 0.0, 0.0))
        res = fit(frame)
        lo, hi = confidence_intervals(res, "rho")
        assert lo < res.model.rho() < hi
        lo2, hi2 = confidence_intervals(res, lambda m: m.rho(), seed=3)
        assert lo2 == pytest.approx(lo, abs=0.02)
        assert hi2 == pytest.approx(hi, abs=0.02)

    def test_independence_working_model(self, rng):
        frame = mixed_censoring_frame(rng, 400, rho=-0.5, fractions=(0.7, 0.3, 0.0, 0.0))
        res = fit(frame, FitConfig(dependence="none", compute_covariance=False))
        assert res.model.rho() == 0.0

    def test_duplicated_covariate_withholds_covariance(self, rng):
        frame = mixed_censoring_frame(rng, 300, beta_y=(0.5,), beta_t=(0.2,), fractions=(0.7, 0.3, 0.0, 0.0))
        dup = ObservationFrame(
            frame.y_lower, frame.y_upper, frame.t_lower, frame.t_upper,
            np.hstack([frame.x, frame.x]), ("x0", "x0_copy"),
        )
        res = fit(dup)
        assert res.covariance is None
        assert "singular_hessian" in res.convergence_report

    def test_sample_size_guard(self, rng):
        frame = mixed_censoring_frame(rng, 10)
        with pytest.raises(DataError):
            fit(frame)


class TestSerialization:
    def test_round_trip_is_bit_exact(self, rng, tmp_path):
        frame = mixed_censoring_frame(rng, 400, fractions=(0.7, 0.3, 0.0, 0.0))
        res = fit(frame, FitConfig(compute_covariance=False))
        path = tmp_path / "model.json"
        save_model(res.model, path)
        back = load_model(path)
        assert np.array_equal(back.margin_y.transform.coefficients, res.model.margin_y.transform.coefficients)
        assert np.array_equal(back.margin_t.transform.coefficients, res.model.margin_t.transform.coefficients)
        assert back.dependence.lambda_ == res.model.dependence.lambda_
        assert loglik(back, frame) == loglik(res.model, frame)

    def test_rejects_other_major_version(self):
        doc = model_to_dict(latent_normal_model(-0.3))
        doc["format_version"] = "2.0.0"
        with pytest.raises(DataError):
            model_from_dict(doc)

    def test_rejects_missing_version(self):
        doc = model_to_dict(latent_normal_model(-0.3))
        del doc["format_version"]
        with pytest.raises(DataError):
            model_from_dict(doc)
