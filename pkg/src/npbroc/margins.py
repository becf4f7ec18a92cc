"""Semiparametric marginal transformation models F(v | x) = G(h(v) - x'beta).

Supports exact and interval-censored observations (right-censoring being
the special case of an unbounded upper end), three links, quantile
inversion and a Kaplan--Meier product-limit estimator.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri_exp
from scipy.stats import skew

from . import _params
from ._optim import maximize, require_converged
from .bernstein import BernsteinBasis, MonotoneTransform, default_bounds
from .exceptions import ConvergenceError, DataError
from .links import Link, get_link

__all__ = [
    "MarginalModel",
    "marginal_cdf",
    "marginal_quantile",
    "fit_marginal",
    "KaplanMeier",
    "kaplan_meier",
]

_LOG_HALF = np.log(0.5)


def latent_from_link(link: Link, s):
    """Map link-scale values s to the standard normal scale Phi^{-1}(G(s))."""
    if link.name == "probit":
        return np.asarray(s, dtype=float)
    s = np.asarray(s, dtype=float)
    logc = link.logcdf(s)
    logs = link.logsf(s)
    with np.errstate(invalid="ignore"):
        z = np.where(logc <= _LOG_HALF, ndtri_exp(logc), -ndtri_exp(logs))
    z = np.where(s == -np.inf, -np.inf, np.where(s == np.inf, np.inf, z))
    return z


def _as_covariates(x, dim: int, n: int | None = None) -> np.ndarray:
    if x is None:
        x = np.zeros(dim)
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        if x.shape[0] != dim:
            raise DataError(f"expected {dim} covariates, got {x.shape[0]}")
    elif x.ndim == 2:
        if x.shape[1] != dim:
            raise DataError(f"expected {dim} covariates, got {x.shape[1]}")
        if n is not None and x.shape[0] != n:
            raise DataError("covariate rows do not match number of values")
    else:
        raise DataError("covariates must be a vector or matrix")
    if not np.all(np.isfinite(x)):
        raise DataError("covariates must be finite")
    return x


@dataclass(frozen=True)
class MarginalModel:
    """Transformation model for one margin."""

    link: Link
    transform: MonotoneTransform
    beta: np.ndarray = field(repr=False)
    covariate_names: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        beta = np.atleast_1d(np.asarray(self.beta, dtype=float))
        object.__setattr__(self, "beta", beta)
        if self.covariate_names and len(self.covariate_names) != beta.shape[0]:
            raise DataError("covariate names do not match beta length")

    @property
    def n_covariates(self) -> int:
        return self.beta.shape[0]

    def link_scale(self, v, x=None):
        """h(v) - x'beta; the argument of the link CDF."""
        x = _as_covariates(x, self.n_covariates, np.asarray(v).size)
        shift = x @ self.beta
        return self.transform(v) - shift

    def latent(self, v, x=None):
        """Phi^{-1}(F(v | x)); equals the link scale under the probit link."""
        return latent_from_link(self.link, self.link_scale(v, x))

    def cdf(self, v, x=None):
        return self.link.cdf(self.link_scale(v, x))

    def quantile(self, p, x=None):
        p = np.asarray(p, dtype=float)
        if np.any((p <= 0.0) | (p >= 1.0)):
            raise ValueError("quantile levels must lie strictly inside (0, 1)")
        x = _as_covariates(x, self.n_covariates, p.size)
        target = self.link.quantile(p) + x @ self.beta
        return self.transform.inverse(target)


def marginal_cdf(model: MarginalModel, v, x=None):
    return model.cdf(v, x)


def marginal_quantile(model: MarginalModel, p, x=None):
    return model.quantile(p, x)


class MarginalLikelihood:
    """Censored log-likelihood of one margin with analytic gradient.

    Design rows for every observation (and every finite interval end) are
    parameter-independent, so they are computed once here; each evaluation
    is then dense linear algebra plus scalar link functions.
    """

    def __init__(self, link: Link, basis: BernsteinBasis, lower, upper, x=None):
        self.link = link
        self.basis = basis
        lower = np.asarray(lower, dtype=float).copy()
        upper = np.asarray(upper, dtype=float).copy()
        if lower.shape != upper.shape or lower.ndim != 1:
            raise DataError("lower and upper must be matching 1-D arrays")
        if basis.log_scale:
            # mass below the support start is a left tail on the log scale
            bad_upper = upper <= 0.0
            if np.any(bad_upper & np.isfinite(upper)):
                raise DataError("nonpositive upper bounds are incompatible with a log-scale margin")
            lower = np.where(lower <= 0.0, -np.inf, lower)
        if np.any(lower > upper):
            idx = int(np.argmax(lower > upper))
            raise DataError(f"crossed interval bounds at row {idx}")
        n = lower.shape[0]
        if n == 0:
            raise DataError("empty data")
        x = np.zeros((n, 0)) if x is None else np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.shape[0] != n:
            raise DataError("covariate rows do not match number of observations")
        if not np.all(np.isfinite(x)):
            raise DataError("covariates must be finite")

        exact = np.isfinite(lower) & (lower == upper)
        if not np.any(exact) and not np.any(np.isfinite(lower) | np.isfinite(upper)):
            raise DataError("no informative observations: all intervals are unbounded")

        self.n = n
        self.n_beta = x.shape[1]
        self.exact = exact
        self.x_exact = x[exact]
        self.a_exact = basis.design_matrix(lower[exact]) if np.any(exact) else np.zeros((0, basis.size))
        self.d_exact = basis.deriv_matrix(lower[exact]) if np.any(exact) else np.zeros((0, basis.size))

        civ = ~exact
        self.n_interval = int(civ.sum())
        self.x_interval = x[civ]
        lo, hi = lower[civ], upper[civ]
        self.lo_finite = np.isfinite(lo)
        self.hi_finite = np.isfinite(hi)
        self.a_lo = basis.design_matrix(lo[self.lo_finite]) if np.any(self.lo_finite) else np.zeros((0, basis.size))
        self.a_hi = basis.design_matrix(hi[self.hi_finite]) if np.any(self.hi_finite) else np.zeros((0, basis.size))

    @property
    def n_params(self) -> int:
        return self.basis.size + self.n_beta

    def split(self, raw: np.ndarray):
        k = self.basis.size
        return raw[:k], raw[k:]

    def value_and_grad(self, raw: np.ndarray):
        raw = np.asarray(raw, dtype=float)
        raw_coef, beta = self.split(raw)
        coef = _params.unconstrained_to_coef(raw_coef)
        k = self.basis.size
        grad_coef = np.zeros(k)
        grad_beta = np.zeros(self.n_beta)
        ll = 0.0

        if self.a_exact.shape[0]:
            # inf coefficients from absurd trial points give nan products
            with np.errstate(invalid="ignore", over="ignore"):
                s = self.a_exact @ coef - self.x_exact @ beta
                hp = self.d_exact @ coef
            if np.any(~(hp > 0.0)):
                return -np.inf, np.zeros_like(raw)
            # -inf + inf from saturated terms at absurd trial points gives
            # nan, which the optimizer treats like -inf and backtracks
            with np.errstate(invalid="ignore"):
                ll += float(np.sum(self.link.logpdf(s)) + np.sum(np.log(hp)))
                ds = self.link.dlogpdf(s)
                grad_coef += ds @ self.a_exact + (1.0 / hp) @ self.d_exact
                grad_beta += -ds @ self.x_exact

        if self.n_interval:
            s_lo = np.full(self.n_interval, -np.inf)
            s_hi = np.full(self.n_interval, np.inf)
            shift = self.x_interval @ beta
            s_lo[self.lo_finite] = self.a_lo @ coef - shift[self.lo_finite]
            s_hi[self.hi_finite] = self.a_hi @ coef - shift[self.hi_finite]
            log_mass = self.link.log_interval(s_lo, s_hi)
            if np.any(~np.isfinite(log_mass)):
                return -np.inf, np.zeros_like(raw)
            ll += float(np.sum(log_mass))
            # d log mass / d s at each finite end
            w_hi = np.zeros(self.n_interval)
            w_lo = np.zeros(self.n_interval)
            # overflow only at absurd trial points (vanishing interval mass);
            # the optimizer backtracks from the resulting non-finite gradient
            with np.errstate(over="ignore", invalid="ignore"):
                w_hi[self.hi_finite] = np.exp(
                    self.link.logpdf(s_hi[self.hi_finite]) - log_mass[self.hi_finite]
                )
                w_lo[self.lo_finite] = np.exp(
                    self.link.logpdf(s_lo[self.lo_finite]) - log_mass[self.lo_finite]
                )
                grad_coef += w_hi[self.hi_finite] @ self.a_hi - w_lo[self.lo_finite] @ self.a_lo
                grad_beta += -(w_hi - w_lo) @ self.x_interval

        grad = np.concatenate([_params.grad_to_unconstrained(grad_coef, raw_coef), grad_beta])
        return ll, grad


def _representative_values(lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
    """One finite value per row for bound selection and initialization."""
    rep = np.where(
        np.isfinite(lower) & np.isfinite(upper),
        0.5 * (lower + upper),
        np.where(np.isfinite(lower), lower, upper),
    )
    return rep[np.isfinite(rep)]


def _resolve_log_scale(log_scale, values: np.ndarray) -> bool:
    if log_scale != "auto":
        return bool(log_scale)
    return bool(np.all(values > 0.0) and skew(values) > 0.5)


def initial_raw_coef(basis: BernsteinBasis, link: Link, working_values: np.ndarray) -> np.ndarray:
    """Least-squares start mapping empirical ranks through the link quantile."""
    n = working_values.shape[0]
    ranks = np.argsort(np.argsort(working_values)) + 1.0
    target = link.quantile((ranks - 0.5) / n)
    s = np.clip((working_values - basis.lower) / (basis.upper - basis.lower), 0.0, 1.0)
    from .bernstein import _binom_rows

    a = _binom_rows(basis.order, s)
    ridge = 1e-8 * np.eye(basis.size)
    coef = np.linalg.solve(a.T @ a + ridge, a.T @ target)
    diffs = np.maximum(np.diff(coef), 1e-2)
    coef = np.concatenate([[coef[0]], coef[0] + np.cumsum(diffs)])
    return _params.coef_to_unconstrained(coef)


def fit_marginal(
    lower,
    upper,
    x=None,
    *,
    link="probit",
    order: int = 6,
    bounds: tuple[float, float] | None = None,
    log_scale="auto",
    covariate_names: tuple[str, ...] = (),
    max_iter: int = 500,
):
    """Fit one censored marginal transformation model by maximum likelihood.

    ``lower`` and ``upper`` give per-observation interval ends (equal for
    exact values, +inf upper for right-censoring, -inf lower for values
    below a detection limit).
    """
    model, _ = fit_marginal_with_details(
        lower,
        upper,
        x,
        link=link,
        order=order,
        bounds=bounds,
        log_scale=log_scale,
        covariate_names=covariate_names,
        max_iter=max_iter,
    )
    return model


def fit_marginal_with_details(
    lower,
    upper,
    x=None,
    *,
    link="probit",
    order: int = 6,
    bounds: tuple[float, float] | None = None,
    log_scale="auto",
    covariate_names: tuple[str, ...] = (),
    max_iter: int = 500,
):
    link = get_link(link)
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    x_arr = None if x is None else np.asarray(x, dtype=float)
    if x_arr is not None and x_arr.ndim == 1:
        x_arr = x_arr[:, None]
    n_beta = 0 if x_arr is None else x_arr.shape[1]

    rep = _representative_values(lower, upper)
    if rep.size == 0:
        raise DataError("no informative observations: all intervals are unbounded")
    if rep.size and np.ptp(rep) == 0.0 and rep.size == lower.size:
        raise DataError("degenerate data: all observed values identical")
    use_log = _resolve_log_scale(log_scale, rep)
    if bounds is None:
        bounds = default_bounds(rep, log_scale=use_log)
    basis = BernsteinBasis(order=order, lower=bounds[0], upper=bounds[1], log_scale=use_log)

    n = lower.shape[0]
    if n < basis.size + n_beta + 1:
        raise DataError(
            f"need at least {basis.size + n_beta + 1} observations for "
            f"{basis.size + n_beta} parameters, got {n}"
        )

    lik = MarginalLikelihood(link, basis, lower, upper, x_arr)
    working = np.log(rep[rep > 0.0]) if use_log else rep
    raw0 = np.concatenate([initial_raw_coef(basis, link, working), np.zeros(n_beta)])
    result = maximize(
        lik.value_and_grad,
        raw0,
        max_iter=max_iter,
        boundary_indices=tuple(range(1, basis.size)),
    )
    require_converged(result, "marginal fit")

    raw_coef, beta = lik.split(result.theta)
    transform = MonotoneTransform(basis, _params.unconstrained_to_coef(raw_coef))
    model = MarginalModel(
        link=link,
        transform=transform,
        beta=beta,
        covariate_names=tuple(covariate_names),
    )
    return model, result


@dataclass(frozen=True)
class KaplanMeier:
    """Product-limit survival estimate; deaths precede censorings at ties."""

    event_times: np.ndarray
    survival: np.ndarray
    n_risk: np.ndarray
    n_events: np.ndarray

    def survival_at(self, t):
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.event_times, t, side="right")
        steps = np.concatenate([[1.0], self.survival])
        out = steps[idx]
        return out if out.ndim else float(out)

    def cdf_at(self, t):
        return 1.0 - self.survival_at(t)


def kaplan_meier(times, event_indicator) -> KaplanMeier:
    times = np.asarray(times, dtype=float)
    events = np.asarray(event_indicator, dtype=bool)
    if times.size == 0:
        raise DataError("empty data")
    if times.shape != events.shape:
        raise DataError("times and event indicators must have the same length")
    if np.any(times < 0) or np.any(~np.isfinite(times)):
        raise DataError("times must be finite and nonnegative")

    order = np.argsort(times, kind="stable")
    t_sorted = times[order]
    e_sorted = events[order]
    uniq = np.unique(t_sorted[e_sorted])
    survival = np.empty(uniq.shape[0])
    n_risk = np.empty(uniq.shape[0], dtype=int)
    n_events = np.empty(uniq.shape[0], dtype=int)
    s = 1.0
    for j, tj in enumerate(uniq):
        at_risk = int(np.sum(t_sorted >= tj))  # censored at tj still at risk
        deaths = int(np.sum((t_sorted == tj) & e_sorted))
        s *= 1.0 - deaths / at_risk
        survival[j] = s
        n_risk[j] = at_risk
        n_events[j] = deaths
    return KaplanMeier(event_times=uniq, survival=survival, n_risk=n_risk, n_events=n_events)
