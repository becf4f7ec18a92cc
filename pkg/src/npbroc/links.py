"""Link functions for the marginal transformation models.

Each link supplies the CDF G, log-density, the log-derivative of the
density (needed by the analytic score) and numerically stable log interval
probabilities log(G(b) - G(a)) for censored contributions.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit, log_expit, log_ndtr, logit, ndtr, ndtri

__all__ = ["Link", "ProbitLink", "LogitLink", "CloglogLink", "get_link", "LINKS"]

_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


def _log1mexp(x):
    """log(1 - exp(x)) for x <= 0."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        small = np.log(-np.expm1(x))
        large = np.log1p(-np.exp(x))
    return np.where(x > -0.6931471805599453, small, large)


class Link:
    """Base class; subclasses define a strictly increasing CDF on the real line."""

    name: str

    def cdf(self, z):
        raise NotImplementedError

    def logcdf(self, z):
        raise NotImplementedError

    def logsf(self, z):
        raise NotImplementedError

    def quantile(self, p):
        raise NotImplementedError

    def logpdf(self, z):
        raise NotImplementedError

    def pdf(self, z):
        return np.exp(self.logpdf(z))

    def dlogpdf(self, z):
        """d/dz log g(z)."""
        raise NotImplementedError

    def log_interval(self, a, b):
        """log(G(b) - G(a)) for a <= b with infinite endpoints allowed.

        Differences are taken in whichever tail is better conditioned.
        """
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        a, b = np.broadcast_arrays(a, b)
        out = np.full(a.shape, -np.inf)

        both_inf = (a == -np.inf) & (b == np.inf)
        out[both_inf] = 0.0
        lo_inf = (a == -np.inf) & ~both_inf
        hi_inf = (b == np.inf) & ~both_inf
        out[lo_inf] = self.logcdf(b[lo_inf])
        out[hi_inf] = self.logsf(a[hi_inf])

        fin = np.isfinite(a) & np.isfinite(b) & (a < b)
        if np.any(fin):
            af, bf = a[fin], b[fin]
            use_lower = af + bf <= 0.0
            lower = self.logcdf(bf) + _log1mexp(self.logcdf(af) - self.logcdf(bf))
            upper = self.logsf(af) + _log1mexp(self.logsf(bf) - self.logsf(af))
            out[fin] = np.where(use_lower, lower, upper)
        return out if out.ndim else float(out)

    def __repr__(self) -> str:
        return f"{type(self).__name__}()"


class ProbitLink(Link):
    name = "probit"

    def cdf(self, z):
        return ndtr(z)

    def logcdf(self, z):
        return log_ndtr(z)

    def logsf(self, z):
        return log_ndtr(-np.asarray(z, dtype=float))

    def quantile(self, p):
        return ndtri(p)

    def logpdf(self, z):
        z = np.asarray(z, dtype=float)
        # overflow to -inf is the correct limit for huge trial-point inputs
        with np.errstate(over="ignore"):
            return -0.5 * z * z - _LOG_SQRT_2PI

    def dlogpdf(self, z):
        return -np.asarray(z, dtype=float)


class LogitLink(Link):
    name = "logit"

    def cdf(self, z):
        return expit(z)

    def logcdf(self, z):
        return log_expit(z)

    def logsf(self, z):
        return log_expit(-np.asarray(z, dtype=float))

    def quantile(self, p):
        return logit(p)

    def logpdf(self, z):
        z = np.asarray(z, dtype=float)
        return log_expit(z) + log_expit(-z)

    def dlogpdf(self, z):
        z = np.asarray(z, dtype=float)
        return 1.0 - 2.0 * expit(z)


class CloglogLink(Link):
    """Minimum extreme value CDF G(z) = 1 - exp(-exp(z))."""

    name = "cloglog"

    def cdf(self, z):
        return -np.expm1(-np.exp(np.asarray(z, dtype=float)))

    def logcdf(self, z):
        return _log1mexp(-np.exp(np.asarray(z, dtype=float)))

    def logsf(self, z):
        return -np.exp(np.asarray(z, dtype=float))

    def quantile(self, p):
        p = np.asarray(p, dtype=float)
        return np.log(-np.log1p(-p))

    def logpdf(self, z):
        z = np.asarray(z, dtype=float)
        return z - np.exp(z)

    def dlogpdf(self, z):
        return 1.0 - np.exp(np.asarray(z, dtype=float))


LINKS: dict[str, Link] = {
    "probit": ProbitLink(),
    "logit": LogitLink(),
    "cloglog": CloglogLink(),
}


def get_link(name) -> Link:
    if isinstance(name, Link):
        return name
    try:
        return LINKS[name]
    except KeyError:
        raise ValueError(f"unknown link {name!r}; choose from {sorted(LINKS)}") from None
