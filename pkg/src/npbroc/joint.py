"""Joint Gaussian-copula model for a biomarker and a censored event time.

The mixed log-likelihood covers four observation patterns: both
coordinates exact, one exact and one interval-valued (in either order),
and both interval-valued (the detection-limit case).  Every censored term
reduces to closed forms built on the bivariate normal kernel, and the
score is analytic throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import _params
from ._optim import gradient_hessian, maximize, require_converged
from .bvn import bvn_pdf, rectangle_probability, strip_probability
from .exceptions import DataError, NumericError, SingularHessianError
from .links import LINKS, Link, ProbitLink, get_link
from .margins import (
    MarginalLikelihood,
    MarginalModel,
    fit_marginal_with_details,
    latent_from_link,
)
from .bernstein import BernsteinBasis, MonotoneTransform

__all__ = [
    "Dependence",
    "NpbModel",
    "Observation",
    "ObservationFrame",
    "FitConfig",
    "FitResult",
    "rho_of_x",
    "loglik",
    "loglik_exact",
    "loglik_censored",
    "score",
    "fit",
    "confidence_intervals",
    "sample_models",
]

_PROBIT = ProbitLink()
_SQRT_2PI = np.sqrt(2.0 * np.pi)


def lambda_to_rho(lam):
    lam = np.asarray(lam, dtype=float)
    out = -lam / np.sqrt(lam * lam + 1.0)
    return out if out.ndim else float(out)


def rho_to_lambda(rho):
    rho = np.asarray(rho, dtype=float)
    if np.any(np.abs(rho) >= 1.0):
        raise ValueError("rho must lie strictly inside (-1, 1)")
    out = -rho / np.sqrt((1.0 - rho) * (1.0 + rho))
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class Dependence:
    """Dependence parameterization through the unconstrained lambda scale.

    form "constant": rho = -lambda / sqrt(lambda^2 + 1) for all subjects.
    form "covariate": lambda(x) = alpha + x'gamma.
    form "none": rho fixed at zero (independence working model).
    """

    form: str = "constant"
    lambda_: float = 0.0
    alpha: float = 0.0
    gamma: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)

    def __post_init__(self) -> None:
        if self.form not in ("constant", "covariate", "none"):
            raise ValueError(f"unknown dependence form {self.form!r}")
        object.__setattr__(self, "gamma", np.atleast_1d(np.asarray(self.gamma, dtype=float)))

    @property
    def n_params(self) -> int:
        if self.form == "none":
            return 0
        if self.form == "constant":
            return 1
        return 1 + self.gamma.shape[0]

    def lambda_of_x(self, x: np.ndarray):
        if self.form == "none":
            return np.zeros(np.asarray(x).shape[0] if np.asarray(x).ndim == 2 else ())
        if self.form == "constant":
            shape = np.asarray(x).shape[0] if np.asarray(x).ndim == 2 else ()
            return np.full(shape, self.lambda_) if shape != () else self.lambda_
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            if x.shape[0] != self.gamma.shape[0]:
                raise DataError("covariate dimension does not match gamma")
            return self.alpha + x @ self.gamma
        if x.shape[1] != self.gamma.shape[0]:
            raise DataError("covariate dimension does not match gamma")
        return self.alpha + x @ self.gamma

    def rho(self, x=None):
        if self.form == "none":
            return 0.0 if x is None or np.asarray(x).ndim <= 1 else np.zeros(np.asarray(x).shape[0])
        if self.form == "constant":
            r = lambda_to_rho(self.lambda_)
            if x is not None and np.asarray(x).ndim == 2:
                return np.full(np.asarray(x).shape[0], r)
            return r
        if x is None:
            raise DataError("covariate-dependent correlation requires covariates")
        return lambda_to_rho(self.lambda_of_x(x))


@dataclass(frozen=True)
class NpbModel:
    margin_y: MarginalModel
    margin_t: MarginalModel
    dependence: Dependence

    def rho(self, x=None):
        return self.dependence.rho(x)


def rho_of_x(model: NpbModel, x=None):
    return model.rho(x)


@dataclass(frozen=True)
class Observation:
    """One subject: possibly interval-valued biomarker and event time."""

    y_lower: float
    y_upper: float
    t_lower: float
    t_upper: float
    x: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @classmethod
    def exact(cls, y: float, t: float, x=None) -> "Observation":
        x = np.zeros(0) if x is None else np.asarray(x, dtype=float)
        return cls(y, y, t, t, x)

    @classmethod
    def right_censored(cls, y: float, t_lower: float, x=None) -> "Observation":
        x = np.zeros(0) if x is None else np.asarray(x, dtype=float)
        return cls(y, y, t_lower, np.inf, x)


class ObservationFrame:
    """Columnar storage of observations used by the likelihood."""

    def __init__(self, y_lower, y_upper, t_lower, t_upper, x=None, covariate_names=()):
        self.y_lower = np.asarray(y_lower, dtype=float)
        self.y_upper = np.asarray(y_upper, dtype=float)
        self.t_lower = np.asarray(t_lower, dtype=float)
        self.t_upper = np.asarray(t_upper, dtype=float)
        n = self.y_lower.shape[0]
        for name, arr in (("y_upper", self.y_upper), ("t_lower", self.t_lower), ("t_upper", self.t_upper)):
            if arr.shape != (n,):
                raise DataError(f"{name} has shape {arr.shape}, expected ({n},)")
        self.x = np.zeros((n, 0)) if x is None else np.asarray(x, dtype=float)
        if self.x.ndim == 1:
            self.x = self.x[:, None]
        if self.x.shape[0] != n:
            raise DataError("covariate rows do not match number of observations")
        if not np.all(np.isfinite(self.x)):
            raise DataError("covariates must be finite; missing values are not allowed")
        self.covariate_names = tuple(covariate_names) if covariate_names else tuple(
            f"x{j}" for j in range(self.x.shape[1])
        )
        if len(self.covariate_names) != self.x.shape[1]:
            raise DataError("covariate names do not match covariate columns")

        bad = self.y_lower > self.y_upper
        if np.any(bad):
            raise DataError(f"y_lower > y_upper at row {int(np.argmax(bad))}")
        bad = self.t_lower > self.t_upper
        if np.any(bad):
            raise DataError(f"t_lower > t_upper at row {int(np.argmax(bad))}")
        if np.any(np.nan_to_num(self.t_lower, neginf=0.0) < 0.0):
            raise DataError("event times must be nonnegative")
        no_info_y = ~np.isfinite(self.y_lower) & ~np.isfinite(self.y_upper)
        if np.any(no_info_y):
            raise DataError(f"biomarker carries no bound at row {int(np.argmax(no_info_y))}")

    def __len__(self) -> int:
        return self.y_lower.shape[0]

    @property
    def n_covariates(self) -> int:
        return self.x.shape[1]

    @classmethod
    def from_observations(cls, observations, covariate_names=()) -> "ObservationFrame":
        obs = list(observations)
        if not obs:
            raise DataError("empty data")
        x = np.vstack([np.atleast_1d(o.x) for o in obs]) if obs[0].x.size else None
        return cls(
            [o.y_lower for o in obs],
            [o.y_upper for o in obs],
            [o.t_lower for o in obs],
            [o.t_upper for o in obs],
            x,
            covariate_names,
        )

    def subset(self, mask) -> "ObservationFrame":
        return ObservationFrame(
            self.y_lower[mask],
            self.y_upper[mask],
            self.t_lower[mask],
            self.t_upper[mask],
            self.x[mask],
            self.covariate_names,
        )


class _MarginPoints:
    """Design rows of one margin at every evaluation point of a group."""

    def __init__(self, basis: BernsteinBasis, link: Link, values: np.ndarray):
        # values may contain +-inf (or nonpositive entries on a log-scale
        # basis, which map to -inf); design rows exist only where finite
        vals = values.copy()
        if basis.log_scale:
            vals = np.where(vals <= 0.0, -np.inf, vals)
        self.finite = np.isfinite(vals)
        self.sign = np.where(vals > 0, np.inf, -np.inf)
        self.link = link
        self.design = (
            basis.design_matrix(vals[self.finite]) if np.any(self.finite) else np.zeros((0, basis.size))
        )

    def link_scale(self, coef: np.ndarray, shift: np.ndarray) -> np.ndarray:
        s = self.sign.copy()
        s[self.finite] = self.design @ coef - shift[self.finite]
        return s

    def latent_and_slope(self, s: np.ndarray):
        """z = Phi^{-1}(G(s)) and w = dz/ds, with w = 0 at infinite points."""
        if self.link.name == "probit":
            return s, np.where(self.finite, 1.0, 0.0)
        z = latent_from_link(self.link, s)
        w = np.zeros_like(s)
        f = self.finite
        w[f] = np.exp(self.link.logpdf(s[f]) + 0.5 * z[f] * z[f]) * _SQRT_2PI
        return z, w


@dataclass
class _ParamLayout:
    k_y: int
    k_t: int
    p_y: int
    p_t: int
    dep_form: str
    dep_dim: int

    @property
    def size(self) -> int:
        return self.k_y + self.k_t + self.p_y + self.p_t + self.dep_dim

    def split(self, theta: np.ndarray):
        i = 0
        raw_y = theta[i : i + self.k_y]; i += self.k_y
        raw_t = theta[i : i + self.k_t]; i += self.k_t
        beta_y = theta[i : i + self.p_y]; i += self.p_y
        beta_t = theta[i : i + self.p_t]; i += self.p_t
        dep = theta[i:]
        return raw_y, raw_t, beta_y, beta_t, dep

    def names(self, covariate_names) -> list[str]:
        out = [f"h_y:c0"] + [f"h_y:d{m}" for m in range(1, self.k_y)]
        out += [f"h_t:c0"] + [f"h_t:d{m}" for m in range(1, self.k_t)]
        out += [f"beta_y:{covariate_names[j]}" for j in range(self.p_y)]
        out += [f"beta_t:{covariate_names[j]}" for j in range(self.p_t)]
        if self.dep_form == "constant":
            out.append("lambda")
        elif self.dep_form == "covariate":
            out.append("dep:alpha")
            out += [f"dep:gamma:{covariate_names[j]}" for j in range(self.dep_dim - 1)]
        return out


class JointLikelihood:
    """Mixed joint log-likelihood with analytic score, vectorized by pattern."""

    def __init__(
        self,
        frame: ObservationFrame,
        basis_y: BernsteinBasis,
        basis_t: BernsteinBasis,
        link_y: Link = _PROBIT,
        link_t: Link = _PROBIT,
        dep_form: str = "constant",
    ):
        self.frame = frame
        self.basis_y = basis_y
        self.basis_t = basis_t
        link_y = get_link(link_y)
        link_t = get_link(link_t)
        self.link_y = link_y
        self.link_t = link_t
        self.dep_form = dep_form
        p = frame.n_covariates
        self.layout = _ParamLayout(
            k_y=basis_y.size,
            k_t=basis_t.size,
            p_y=p,
            p_t=p,
            dep_form=dep_form,
            dep_dim={"none": 0, "constant": 1, "covariate": 1 + p}[dep_form],
        )

        def effectively_exact(lo, hi, basis):
            lo = lo.copy()
            if basis.log_scale:
                lo = np.where(lo <= 0.0, -np.inf, lo)
            return np.isfinite(lo) & (lo == hi)

        y_exact = effectively_exact(frame.y_lower, frame.y_upper, basis_y)
        t_exact = effectively_exact(frame.t_lower, frame.t_upper, basis_t)
        self.groups = {}
        for tag, mask in (
            ("ee", y_exact & t_exact),
            ("ei", y_exact & ~t_exact),
            ("ie", ~y_exact & t_exact),
            ("ii", ~y_exact & ~t_exact),
        ):
            if not np.any(mask):
                continue
            sub = frame.subset(mask)
            grp = {"mask": mask, "x": sub.x, "n": len(sub)}
            if tag in ("ee", "ei"):
                grp["y"] = _MarginPoints(basis_y, link_y, sub.y_lower)
                grp["dy"] = basis_y.deriv_matrix(sub.y_lower)
            else:
                grp["y_lo"] = _MarginPoints(basis_y, link_y, sub.y_lower)
                grp["y_hi"] = _MarginPoints(basis_y, link_y, sub.y_upper)
            if tag in ("ee", "ie"):
                grp["t"] = _MarginPoints(basis_t, link_t, sub.t_lower)
                grp["dt"] = basis_t.deriv_matrix(sub.t_lower)
            else:
                grp["t_lo"] = _MarginPoints(basis_t, link_t, sub.t_lower)
                grp["t_hi"] = _MarginPoints(basis_t, link_t, sub.t_upper)
            self.groups[tag] = grp

    # -- dependence helpers -------------------------------------------------

    def _rho_and_jac(self, dep: np.ndarray, x: np.ndarray):
        """Per-row rho plus d rho / d lambda; lambda per row for covariate form."""
        n = x.shape[0]
        if self.dep_form == "none":
            return np.zeros(n), None
        if self.dep_form == "constant":
            lam = np.full(n, dep[0])
        else:
            lam = dep[0] + x @ dep[1:]
        rho = -lam / np.sqrt(lam * lam + 1.0)
        drho_dlam = -((lam * lam + 1.0) ** -1.5)
        return rho, drho_dlam

    def _accumulate_dep_grad(self, grad_dep, d_rho, drho_dlam, x):
        if self.dep_form == "none":
            return
        g_lam = d_rho * drho_dlam
        grad_dep[0] += float(np.sum(g_lam))
        if self.dep_form == "covariate":
            grad_dep[1:] += g_lam @ x

    # -- evaluation ---------------------------------------------------------

    def value_and_grad(self, theta: np.ndarray):
        ll, grads, bad = self._evaluate(theta, want_grad=True)
        if bad is not None:
            return -np.inf, np.zeros(self.layout.size)
        return ll, grads

    def contributions(self, theta: np.ndarray) -> np.ndarray:
        """Per-observation log-likelihood terms in the original row order."""
        out = np.full(len(self.frame), np.nan)
        for tag, grp in self.groups.items():
            out[grp["mask"]] = self._group_terms(theta, tag, grp)
        return out

    def _evaluate(self, theta, want_grad: bool):
        # absurd trial points overflow or produce nans harmlessly; the
        # optimizer backtracks when the objective comes back non-finite
        with np.errstate(over="ignore", invalid="ignore"):
            return self._evaluate_unguarded(theta, want_grad)

    def _evaluate_unguarded(self, theta, want_grad: bool):
        theta = np.asarray(theta, dtype=float)
        lay = self.layout
        raw_y, raw_t, beta_y, beta_t, dep = lay.split(theta)
        coef_y = _params.unconstrained_to_coef(raw_y)
        coef_t = _params.unconstrained_to_coef(raw_t)

        ll = 0.0
        g_coef_y = np.zeros(lay.k_y)
        g_coef_t = np.zeros(lay.k_t)
        g_beta_y = np.zeros(lay.p_y)
        g_beta_t = np.zeros(lay.p_t)
        g_dep = np.zeros(lay.dep_dim)

        for tag, grp in self.groups.items():
            x = grp["x"]
            rho, drho_dlam = self._rho_and_jac(dep, x)
            q = (1.0 - rho) * (1.0 + rho)
            if np.any(q <= 0.0):
                return -np.inf, None, "degenerate correlation"
            sq = np.sqrt(q)
            shift_y = x @ beta_y
            shift_t = x @ beta_t

            if tag == "ee":
                pts_y, pts_t = grp["y"], grp["t"]
                s_y = pts_y.link_scale(coef_y, shift_y)
                s_t = pts_t.link_scale(coef_t, shift_t)
                z_y, w_y = pts_y.latent_and_slope(s_y)
                z_t, w_t = pts_t.latent_and_slope(s_t)
                hp_y = grp["dy"] @ coef_y
                hp_t = grp["dt"] @ coef_t
                if np.any(hp_y <= 0.0) or np.any(hp_t <= 0.0):
                    return -np.inf, None, "zero transform derivative at an exact observation"
                quad = (z_y * z_y - 2.0 * rho * z_y * z_t + z_t * z_t) / q
                term = (
                    -np.log(2.0 * np.pi)
                    - 0.5 * np.log(q)
                    - 0.5 * quad
                    + self.link_y.logpdf(s_y)
                    + np.log(hp_y)
                    + 0.5 * z_y * z_y
                    + 0.5 * np.log(2.0 * np.pi)
                    + self.link_t.logpdf(s_t)
                    + np.log(hp_t)
                    + 0.5 * z_t * z_t
                    + 0.5 * np.log(2.0 * np.pi)
                )
                ll += float(np.sum(term))
                if not want_grad:
                    continue
                dz_y = -(z_y - rho * z_t) / q
                dz_t = -(z_t - rho * z_y) / q
                # overflow to inf only at absurd trial points; the optimizer
                # backtracks once the objective comes back non-finite
                with np.errstate(over="ignore", invalid="ignore"):
                    d_rho = (rho * q - rho * (z_y * z_y + z_t * z_t) + (1.0 + rho * rho) * z_y * z_t) / (q * q)
                ds_y = dz_y * w_y + self.link_y.dlogpdf(s_y) + z_y * w_y
                ds_t = dz_t * w_t + self.link_t.dlogpdf(s_t) + z_t * w_t
                g_coef_y += ds_y @ pts_y.design + (1.0 / hp_y) @ grp["dy"]
                g_coef_t += ds_t @ pts_t.design + (1.0 / hp_t) @ grp["dt"]
                g_beta_y += -ds_y @ x
                g_beta_t += -ds_t @ x
                self._accumulate_dep_grad(g_dep, d_rho, drho_dlam, x)

            elif tag in ("ei", "ie"):
                if tag == "ei":
                    pts_e, d_e = grp["y"], grp["dy"]
                    pts_lo, pts_hi = grp["t_lo"], grp["t_hi"]
                    link_e, link_i = self.link_y, self.link_t
                    shift_e, shift_i = shift_y, shift_t
                    coef_e, coef_i = coef_y, coef_t
                else:
                    pts_e, d_e = grp["t"], grp["dt"]
                    pts_lo, pts_hi = grp["y_lo"], grp["y_hi"]
                    link_e, link_i = self.link_t, self.link_y
                    shift_e, shift_i = shift_t, shift_y
                    coef_e, coef_i = coef_t, coef_y

                s_e = pts_e.link_scale(coef_e, shift_e)
                z_e, w_e = pts_e.latent_and_slope(s_e)
                hp = d_e @ coef_e
                if np.any(hp <= 0.0):
                    return -np.inf, None, "zero transform derivative at an exact observation"
                s_lo = pts_lo.link_scale(coef_i, shift_i)
                s_hi = pts_hi.link_scale(coef_i, shift_i)
                z_lo, w_lo = pts_lo.latent_and_slope(s_lo)
                z_hi, w_hi = pts_hi.latent_and_slope(s_hi)
                with np.errstate(invalid="ignore"):
                    u_lo = np.where(pts_lo.finite, (z_lo - rho * z_e) / sq, -np.inf)
                    u_hi = np.where(pts_hi.finite, (z_hi - rho * z_e) / sq, np.inf)
                log_mass = _PROBIT.log_interval(u_lo, u_hi)
                if np.any(~np.isfinite(log_mass)):
                    return -np.inf, None, "empty probability mass in a censored interval"
                ll += float(np.sum(log_mass + link_e.logpdf(s_e) + np.log(hp)))
                if not want_grad:
                    continue
                with np.errstate(over="ignore"):
                    e_hi = np.where(pts_hi.finite, np.exp(_PROBIT.logpdf(u_hi) - log_mass), 0.0)
                    e_lo = np.where(pts_lo.finite, np.exp(_PROBIT.logpdf(u_lo) - log_mass), 0.0)
                dz_e = -(rho / sq) * (e_hi - e_lo)
                ds_e = dz_e * w_e + link_e.dlogpdf(s_e)
                ds_hi = (e_hi / sq) * w_hi
                ds_lo = -(e_lo / sq) * w_lo
                with np.errstate(invalid="ignore"):
                    du_hi = np.where(pts_hi.finite, (rho * u_hi / sq - z_e) / sq, 0.0)
                    du_lo = np.where(pts_lo.finite, (rho * u_lo / sq - z_e) / sq, 0.0)
                d_rho = e_hi * du_hi - e_lo * du_lo

                g_coef_e = ds_e @ pts_e.design + (1.0 / hp) @ d_e
                g_coef_i = ds_hi[pts_hi.finite] @ pts_hi.design + ds_lo[pts_lo.finite] @ pts_lo.design
                g_beta_e = -ds_e @ x
                g_beta_i = -(ds_hi + ds_lo) @ x
                if tag == "ei":
                    g_coef_y += g_coef_e; g_coef_t += g_coef_i
                    g_beta_y += g_beta_e; g_beta_t += g_beta_i
                else:
                    g_coef_t += g_coef_e; g_coef_y += g_coef_i
                    g_beta_t += g_beta_e; g_beta_y += g_beta_i
                self._accumulate_dep_grad(g_dep, d_rho, drho_dlam, x)

            else:  # "ii": both interval-valued (detection limits etc.)
                y_lo, y_hi = grp["y_lo"], grp["y_hi"]
                t_lo, t_hi = grp["t_lo"], grp["t_hi"]
                za_y, wa_y = y_lo.latent_and_slope(y_lo.link_scale(coef_y, shift_y))
                zb_y, wb_y = y_hi.latent_and_slope(y_hi.link_scale(coef_y, shift_y))
                za_t, wa_t = t_lo.latent_and_slope(t_lo.link_scale(coef_t, shift_t))
                zb_t, wb_t = t_hi.latent_and_slope(t_hi.link_scale(coef_t, shift_t))
                mass = rectangle_probability(za_y, zb_y, za_t, zb_t, rho)
                if np.any(mass <= 0.0):
                    return -np.inf, None, "empty probability mass in a censored rectangle"
                ll += float(np.sum(np.log(mass)))
                if not want_grad:
                    continue

                def corner_strip(z_edge, finite, a_other, b_other):
                    out = np.zeros_like(z_edge)
                    if np.any(finite):
                        out[finite] = strip_probability(
                            z_edge[finite], a_other[finite], b_other[finite], rho[finite]
                        )
                    return out

                d_zb_y = corner_strip(zb_y, y_hi.finite, za_t, zb_t) / mass
                d_za_y = -corner_strip(za_y, y_lo.finite, za_t, zb_t) / mass
                d_zb_t = corner_strip(zb_t, t_hi.finite, za_y, zb_y) / mass
                d_za_t = -corner_strip(za_t, t_lo.finite, za_y, zb_y) / mass
                d_rho = (
                    bvn_pdf(zb_y, zb_t, rho)
                    - bvn_pdf(za_y, zb_t, rho)
                    - bvn_pdf(zb_y, za_t, rho)
                    + bvn_pdf(za_y, za_t, rho)
                ) / mass

                ds_b_y = d_zb_y * wb_y
                ds_a_y = d_za_y * wa_y
                ds_b_t = d_zb_t * wb_t
                ds_a_t = d_za_t * wa_t
                g_coef_y += ds_b_y[y_hi.finite] @ y_hi.design + ds_a_y[y_lo.finite] @ y_lo.design
                g_coef_t += ds_b_t[t_hi.finite] @ t_hi.design + ds_a_t[t_lo.finite] @ t_lo.design
                g_beta_y += -(ds_b_y + ds_a_y) @ x
                g_beta_t += -(ds_b_t + ds_a_t) @ x
                self._accumulate_dep_grad(g_dep, d_rho, drho_dlam, x)

        if not want_grad:
            return ll, None, None
        grad = np.concatenate(
            [
                _params.grad_to_unconstrained(g_coef_y, raw_y),
                _params.grad_to_unconstrained(g_coef_t, raw_t),
                g_beta_y,
                g_beta_t,
                g_dep,
            ]
        )
        return ll, grad, None

    def _group_terms(self, theta, tag, grp):
        """Per-row contributions of one group (for diagnostics and errors)."""
        theta = np.asarray(theta, dtype=float)
        raw_y, raw_t, beta_y, beta_t, dep = self.layout.split(theta)
        coef_y = _params.unconstrained_to_coef(raw_y)
        coef_t = _params.unconstrained_to_coef(raw_t)
        x = grp["x"]
        rho, _ = self._rho_and_jac(dep, x)
        q = (1.0 - rho) * (1.0 + rho)
        sq = np.sqrt(q)
        shift_y = x @ beta_y
        shift_t = x @ beta_t

        if tag == "ee":
            s_y = grp["y"].link_scale(coef_y, shift_y)
            s_t = grp["t"].link_scale(coef_t, shift_t)
            z_y, _ = grp["y"].latent_and_slope(s_y)
            z_t, _ = grp["t"].latent_and_slope(s_t)
            hp_y = grp["dy"] @ coef_y
            hp_t = grp["dt"] @ coef_t
            with np.errstate(divide="ignore", invalid="ignore"):
                quad = (z_y * z_y - 2.0 * rho * z_y * z_t + z_t * z_t) / q
                return (
                    -0.5 * np.log(q)
                    - 0.5 * quad
                    + self.link_y.logpdf(s_y)
                    + self.link_t.logpdf(s_t)
                    + 0.5 * (z_y * z_y + z_t * z_t)
                    + np.log(hp_y)
                    + np.log(hp_t)
                )
        if tag in ("ei", "ie"):
            if tag == "ei":
                pts_e, d_e, link_e = grp["y"], grp["dy"], self.link_y
                pts_lo, pts_hi = grp["t_lo"], grp["t_hi"]
                coef_e, coef_i = coef_y, coef_t
                shift_e, shift_i = shift_y, shift_t
            else:
                pts_e, d_e, link_e = grp["t"], grp["dt"], self.link_t
                pts_lo, pts_hi = grp["y_lo"], grp["y_hi"]
                coef_e, coef_i = coef_t, coef_y
                shift_e, shift_i = shift_t, shift_y
            s_e = pts_e.link_scale(coef_e, shift_e)
            z_e, _ = pts_e.latent_and_slope(s_e)
            hp = d_e @ coef_e
            z_lo, _ = pts_lo.latent_and_slope(pts_lo.link_scale(coef_i, shift_i))
            z_hi, _ = pts_hi.latent_and_slope(pts_hi.link_scale(coef_i, shift_i))
            with np.errstate(invalid="ignore", divide="ignore"):
                u_lo = np.where(pts_lo.finite, (z_lo - rho * z_e) / sq, -np.inf)
                u_hi = np.where(pts_hi.finite, (z_hi - rho * z_e) / sq, np.inf)
                return _PROBIT.log_interval(u_lo, u_hi) + link_e.logpdf(s_e) + np.log(hp)
        # "ii"
        za_y, _ = grp["y_lo"].latent_and_slope(grp["y_lo"].link_scale(coef_y, shift_y))
        zb_y, _ = grp["y_hi"].latent_and_slope(grp["y_hi"].link_scale(coef_y, shift_y))
        za_t, _ = grp["t_lo"].latent_and_slope(grp["t_lo"].link_scale(coef_t, shift_t))
        zb_t, _ = grp["t_hi"].latent_and_slope(grp["t_hi"].link_scale(coef_t, shift_t))
        with np.errstate(divide="ignore"):
            return np.log(rectangle_probability(za_y, zb_y, za_t, zb_t, rho))


# -- public model <-> theta plumbing ---------------------------------------


def _theta_from_model(model: NpbModel) -> np.ndarray:
    pieces = [
        _params.coef_to_unconstrained(model.margin_y.transform.coefficients),
        _params.coef_to_unconstrained(model.margin_t.transform.coefficients),
        model.margin_y.beta,
        model.margin_t.beta,
    ]
    dep = model.dependence
    if dep.form == "constant":
        pieces.append([dep.lambda_])
    elif dep.form == "covariate":
        pieces.append(np.concatenate([[dep.alpha], dep.gamma]))
    return np.concatenate([np.atleast_1d(np.asarray(p, dtype=float)) for p in pieces])


def _model_from_theta(
    theta: np.ndarray,
    layout: _ParamLayout,
    basis_y: BernsteinBasis,
    basis_t: BernsteinBasis,
    link_y: Link,
    link_t: Link,
    covariate_names,
) -> NpbModel:
    raw_y, raw_t, beta_y, beta_t, dep = layout.split(np.asarray(theta, dtype=float))
    margin_y = MarginalModel(
        link=link_y,
        transform=MonotoneTransform(basis_y, _params.unconstrained_to_coef(raw_y)),
        beta=beta_y,
        covariate_names=tuple(covariate_names),
    )
    margin_t = MarginalModel(
        link=link_t,
        transform=MonotoneTransform(basis_t, _params.unconstrained_to_coef(raw_t)),
        beta=beta_t,
        covariate_names=tuple(covariate_names),
    )
    if layout.dep_form == "none":
        dependence = Dependence(form="none")
    elif layout.dep_form == "constant":
        dependence = Dependence(form="constant", lambda_=float(dep[0]))
    else:
        dependence = Dependence(form="covariate", alpha=float(dep[0]), gamma=dep[1:])
    return NpbModel(margin_y=margin_y, margin_t=margin_t, dependence=dependence)


def _likelihood_for_model(model: NpbModel, data) -> tuple[JointLikelihood, np.ndarray]:
    frame = data if isinstance(data, ObservationFrame) else ObservationFrame.from_observations(data)
    lik = JointLikelihood(
        frame,
        model.margin_y.transform.basis,
        model.margin_t.transform.basis,
        model.margin_y.link,
        model.margin_t.link,
        model.dependence.form,
    )
    return lik, _theta_from_model(model)


def loglik(model: NpbModel, data) -> float:
    """Total mixed log-likelihood; raises on non-finite contributions."""
    lik, theta = _likelihood_for_model(model, data)
    terms = lik.contributions(theta)
    bad = ~np.isfinite(terms)
    if np.any(bad):
        idx = np.flatnonzero(bad)[:10].tolist()
        raise NumericError(f"non-finite log-likelihood contribution at rows {idx}")
    return float(np.sum(terms))


def loglik_exact(model: NpbModel, obs: Observation) -> float:
    if not (obs.y_lower == obs.y_upper and obs.t_lower == obs.t_upper):
        raise DataError("observation is not exact in both coordinates")
    return loglik(model, [obs])


def loglik_censored(model: NpbModel, obs: Observation) -> float:
    if obs.y_lower == obs.y_upper and obs.t_lower == obs.t_upper:
        raise DataError("observation has no interval-valued coordinate")
    return loglik(model, [obs])


def score(model: NpbModel, data) -> np.ndarray:
    """Analytic gradient of the log-likelihood in the unconstrained space."""
    lik, theta = _likelihood_for_model(model, data)
    ll, grad = lik.value_and_grad(theta)
    if not np.isfinite(ll):
        raise NumericError("log-likelihood is not finite at the supplied parameters")
    return grad


# -- fitting ----------------------------------------------------------------


@dataclass(frozen=True)
class FitConfig:
    order_y: int = 6
    order_t: int = 6
    link_y: str = "probit"
    link_t: str = "probit"
    log_scale_y: object = "auto"
    log_scale_t: object = "auto"
    bounds_y: tuple[float, float] | None = None
    bounds_t: tuple[float, float] | None = None
    dependence: str = "constant"
    max_iter: int = 500
    compute_covariance: bool = True
    hessian_step: float = 1e-4


@dataclass
class FitResult:
    model: NpbModel
    loglik: float
    gradient_norm: float
    covariance: np.ndarray | None
    theta: np.ndarray
    param_names: list[str]
    convergence_report: dict

    def standard_errors(self) -> np.ndarray:
        if self.covariance is None:
            raise SingularHessianError("covariance unavailable: observed information singular")
        return np.sqrt(np.diag(self.covariance))


def fit(data, config: FitConfig = FitConfig()) -> FitResult:
    """Two-stage maximum likelihood: margins first, then the joint model."""
    frame = data if isinstance(data, ObservationFrame) else ObservationFrame.from_observations(data)
    n_params_hint = (config.order_y + 1) + (config.order_t + 1) + 2 * frame.n_covariates + 1
    if len(frame) <= n_params_hint:
        raise DataError(f"sample size {len(frame)} does not exceed parameter count {n_params_hint}")

    margin_y, res_y = fit_marginal_with_details(
        frame.y_lower,
        frame.y_upper,
        frame.x if frame.n_covariates else None,
        link=config.link_y,
        order=config.order_y,
        bounds=config.bounds_y,
        log_scale=config.log_scale_y,
        covariate_names=frame.covariate_names,
        max_iter=config.max_iter,
    )
    margin_t, res_t = fit_marginal_with_details(
        frame.t_lower,
        frame.t_upper,
        frame.x if frame.n_covariates else None,
        link=config.link_t,
        order=config.order_t,
        bounds=config.bounds_t,
        log_scale=config.log_scale_t,
        covariate_names=frame.covariate_names,
        max_iter=config.max_iter,
    )

    lik = JointLikelihood(
        frame,
        margin_y.transform.basis,
        margin_t.transform.basis,
        margin_y.link,
        margin_t.link,
        config.dependence,
    )
    theta0 = np.concatenate(
        [
            _params.coef_to_unconstrained(margin_y.transform.coefficients),
            _params.coef_to_unconstrained(margin_t.transform.coefficients),
            margin_y.beta,
            margin_t.beta,
            np.zeros(lik.layout.dep_dim),
        ]
    )
    stage1_loglik = lik.value_and_grad(theta0)[0]
    k_y = lik.layout.k_y
    gap_indices = tuple(range(1, k_y)) + tuple(range(k_y + 1, k_y + lik.layout.k_t))
    result = maximize(
        lik.value_and_grad, theta0, max_iter=config.max_iter, boundary_indices=gap_indices
    )
    require_converged(result, "joint fit")

    covariance = None
    singular_reason = None
    if config.compute_covariance:
        hess = gradient_hessian(lik.value_and_grad, result.theta, step_scale=config.hessian_step)
        # gap coordinates near the tie boundary carry curvature of order
        # exp(theta_j), drowning the information matrix; treat gaps below
        # e^-10 (invisible on the transform scale) as collapsed and invert
        # on the active subspace, leaving zero rows for the rest
        active = np.ones(lik.layout.size, dtype=bool)
        for j in gap_indices:
            if result.theta[j] <= -10.0:
                active[j] = False
        try:
            info = -hess[np.ix_(active, active)]
            cond = np.linalg.cond(info)
            if not np.isfinite(cond) or cond > 1e12:
                raise np.linalg.LinAlgError(f"ill-conditioned information (cond={cond:.2e})")
            block = np.linalg.inv(info)
            block = 0.5 * (block + block.T)
            if np.any(np.diag(block) <= 0.0):
                raise np.linalg.LinAlgError("nonpositive variance estimate")
            covariance = np.zeros((lik.layout.size, lik.layout.size))
            covariance[np.ix_(active, active)] = block
        except np.linalg.LinAlgError as exc:
            covariance = None
            singular_reason = str(exc)

    model = _model_from_theta(
        result.theta,
        lik.layout,
        margin_y.transform.basis,
        margin_t.transform.basis,
        margin_y.link,
        margin_t.link,
        frame.covariate_names,
    )
    report = {
        "stage1_loglik_y": res_y.loglik,
        "stage1_loglik_t": res_t.loglik,
        "stage1_joint_loglik": float(stage1_loglik),
        "n_iter": result.n_iter,
        "converged": result.converged,
        "singular_hessian": singular_reason,
        "n_obs": len(frame),
    }
    return FitResult(
        model=model,
        loglik=result.loglik,
        gradient_norm=result.gradient_norm,
        covariance=covariance,
        theta=result.theta,
        param_names=lik.layout.names(frame.covariate_names),
        convergence_report=report,
    )


# -- inference --------------------------------------------------------------


def sample_models(fit_result: FitResult, size: int, rng) -> list[NpbModel]:
    """Draw models from the asymptotic normal of the unconstrained parameters."""
    if fit_result.covariance is None:
        raise SingularHessianError("covariance unavailable: observed information singular")
    model = fit_result.model
    lay = _ParamLayout(
        k_y=model.margin_y.transform.basis.size,
        k_t=model.margin_t.transform.basis.size,
        p_y=model.margin_y.beta.shape[0],
        p_t=model.margin_t.beta.shape[0],
        dep_form=model.dependence.form,
        dep_dim=model.dependence.n_params,
    )
    # draw only in the directions with positive variance (collapsed gap
    # coordinates have zero rows in the covariance and stay at their value)
    active = np.diag(fit_result.covariance) > 0.0
    chol = np.linalg.cholesky(fit_result.covariance[np.ix_(active, active)])
    names = model.margin_y.covariate_names
    out: list[NpbModel] = []
    attempts = 0
    while len(out) < size and attempts < 20 * size:
        remaining = size - len(out)
        draws = np.tile(fit_result.theta, (remaining, 1))
        draws[:, active] += rng.standard_normal((remaining, int(active.sum()))) @ chol.T
        attempts += remaining
        for d in draws:
            try:
                out.append(
                    _model_from_theta(
                        d,
                        lay,
                        model.margin_y.transform.basis,
                        model.margin_t.transform.basis,
                        model.margin_y.link,
                        model.margin_t.link,
                        names,
                    )
                )
            except ValueError:
                # a far-tail draw overflowed the ordered-coefficient map;
                # discard it, keeping the draw sequence deterministic
                continue
    if len(out) < size:
        raise NumericError("could not draw valid models from the fitted covariance")
    return out


def confidence_intervals(
    fit_result: FitResult,
    functional,
    level: float = 0.95,
    *,
    n_draws: int = 2000,
    seed: int = 0,
) -> tuple[float, float]:
    """Wald interval for a named parameter or sampled interval for a functional.

    ``functional`` is either a parameter name from ``fit_result.param_names``,
    the special name "rho" (Wald on the lambda scale mapped through the
    correlation transform), or a callable model -> scalar, propagated by
    sampling from the asymptotic normal distribution of the parameters.
    """
    if not 0.0 < level < 1.0:
        raise ValueError("level must be in (0, 1)")
    if fit_result.covariance is None:
        raise SingularHessianError("covariance unavailable: observed information singular")
    from scipy.special import ndtri

    zq = ndtri(0.5 + level / 2.0)
    if isinstance(functional, str):
        if functional == "rho":
            if fit_result.model.dependence.form != "constant":
                raise ValueError("'rho' interval requires the constant dependence form")
            idx = fit_result.param_names.index("lambda")
            se = float(np.sqrt(fit_result.covariance[idx, idx]))
            lam_hat = fit_result.theta[idx]
            lo, hi = lambda_to_rho(lam_hat + zq * se), lambda_to_rho(lam_hat - zq * se)
            return float(lo), float(hi)
        idx = fit_result.param_names.index(functional)
        se = float(np.sqrt(fit_result.covariance[idx, idx]))
        est = fit_result.theta[idx]
        return float(est - zq * se), float(est + zq * se)

    rng = np.random.default_rng(seed)
    models = sample_models(fit_result, n_draws, rng)
    values = np.array([functional(m) for m in models], dtype=float)
    values = values[np.isfinite(values)]
    if values.size < n_draws // 2:
        raise NumericError("too many non-finite functional values among parameter draws")
    alpha = 1.0 - level
    return (
        float(np.quantile(values, alpha / 2.0)),
        float(np.quantile(values, 1.0 - alpha / 2.0)),
    )
