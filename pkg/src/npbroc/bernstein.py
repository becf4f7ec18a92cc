"""Bernstein-polynomial bases and monotone nondecreasing transformations.

The baseline transformation of each margin is a linear combination of
Bernstein basis polynomials on a bounded interval.  Ordered coefficients
make the combination nondecreasing; outside the interval the function is
continued linearly with the boundary slope so that it stays monotone on
the whole real line.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

__all__ = ["BernsteinBasis", "MonotoneTransform", "default_bounds"]


def _binom_rows(k: int, s: np.ndarray) -> np.ndarray:
    """Rows of binomial(k, m) * s^m * (1-s)^(k-m) for m = 0..k, s in [0, 1]."""
    s = np.asarray(s, dtype=float)
    m = np.arange(k + 1)
    logc = gammaln(k + 1) - gammaln(m + 1) - gammaln(k - m + 1)
    # xlogy-style handling of the endpoints
    with np.errstate(divide="ignore", invalid="ignore"):
        logs = np.where(m > 0, m * np.log(s[..., None]), 0.0)
        log1ms = np.where(k - m > 0, (k - m) * np.log(1.0 - s[..., None]), 0.0)
    out = np.exp(logc + logs + log1ms)
    out[np.isnan(out)] = 0.0
    return out


@dataclass(frozen=True)
class BernsteinBasis:
    """Bernstein basis of a given order on the interval [lower, upper].

    When ``log_scale`` is set, inputs are log-transformed before rescaling
    to the unit interval; ``lower`` and ``upper`` are then bounds on the
    log scale.
    """

    order: int
    lower: float
    upper: float
    log_scale: bool = False

    def __post_init__(self) -> None:
        if self.order < 1:
            raise ValueError(f"order must be >= 1, got {self.order}")
        if not (np.isfinite(self.lower) and np.isfinite(self.upper)):
            raise ValueError("bounds must be finite")
        if self.upper <= self.lower:
            raise ValueError(f"upper ({self.upper}) must exceed lower ({self.lower})")

    @property
    def size(self) -> int:
        return self.order + 1

    def _working_scale(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if not np.all(np.isfinite(v)):
            raise ValueError("basis inputs must be finite")
        if self.log_scale:
            if np.any(v <= 0.0):
                raise ValueError("inputs must be positive on a log-scale basis")
            v = np.log(v)
        return v

    def design_matrix(self, v) -> np.ndarray:
        """Basis rows a(v) such that h(v) = a(v) @ coefficients.

        Values outside [lower, upper] get linearly extrapolated rows using
        the boundary derivative, keeping h monotone on the real line.
        """
        w = self._working_scale(v)
        scalar = w.ndim == 0
        w = np.atleast_1d(w)
        width = self.upper - self.lower
        s = np.clip((w - self.lower) / width, 0.0, 1.0)
        rows = _binom_rows(self.order, s)
        below = w < self.lower
        above = w > self.upper
        if np.any(below):
            excess = (w[below] - self.lower)[:, None]
            rows[below] += excess * self._slope_rows(np.zeros(1))
        if np.any(above):
            excess = (w[above] - self.upper)[:, None]
            rows[above] += excess * self._slope_rows(np.ones(1))
        return rows[0] if scalar else rows

    def _slope_rows(self, s: np.ndarray) -> np.ndarray:
        """Rows giving dh/dw at unit-scale positions s (no log chain factor)."""
        k = self.order
        width = self.upper - self.lower
        lower_rows = _binom_rows(k - 1, s) if k > 1 else np.ones((len(s), 1))
        out = np.zeros((len(s), k + 1))
        out[:, 1:] += lower_rows
        out[:, :-1] -= lower_rows
        return out * (k / width)

    def deriv_matrix(self, v) -> np.ndarray:
        """Rows d(v) such that h'(v) = d(v) @ coefficients (chain rule included)."""
        w = self._working_scale(v)
        scalar = w.ndim == 0
        vv = np.atleast_1d(np.asarray(v, dtype=float))
        w = np.atleast_1d(w)
        s = np.clip((w - self.lower) / (self.upper - self.lower), 0.0, 1.0)
        rows = self._slope_rows(s)
        if self.log_scale:
            rows = rows / vv[:, None]
        return rows[0] if scalar else rows


@dataclass(frozen=True)
class MonotoneTransform:
    """Nondecreasing transformation h(v) = b(v)' theta with ordered coefficients."""

    basis: BernsteinBasis
    coefficients: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        coef = np.asarray(self.coefficients, dtype=float)
        object.__setattr__(self, "coefficients", coef)
        if coef.shape != (self.basis.size,):
            raise ValueError(
                f"expected {self.basis.size} coefficients, got shape {coef.shape}"
            )
        if not np.all(np.isfinite(coef)):
            raise ValueError("coefficients must be finite")
        if np.any(np.diff(coef) < -1e-10):
            raise ValueError("coefficients must be nondecreasing")

    def __call__(self, v):
        return self.basis.design_matrix(v) @ self.coefficients

    def derivative(self, v):
        return self.basis.deriv_matrix(v) @ self.coefficients

    def inverse(self, target):
        """Solve h(v) = target by monotone bisection with boundary extrapolation."""
        target = np.asarray(target, dtype=float)
        scalar = target.ndim == 0
        t = np.atleast_1d(target).astype(float)
        b = self.basis
        lo_val = float(self(np.exp(b.lower)) if b.log_scale else self(b.lower))
        hi_val = float(self(np.exp(b.upper)) if b.log_scale else self(b.upper))
        slope_lo = float(b._slope_rows(np.zeros(1))[0] @ self.coefficients)
        slope_hi = float(b._slope_rows(np.ones(1))[0] @ self.coefficients)

        w = np.empty_like(t)
        below = t < lo_val
        above = t > hi_val
        if np.any(below):
            if slope_lo <= 0.0:
                raise ValueError("transform is flat at the lower bound; cannot invert below it")
            w[below] = b.lower + (t[below] - lo_val) / slope_lo
        if np.any(above):
            if slope_hi <= 0.0:
                raise ValueError("transform is flat at the upper bound; cannot invert above it")
            w[above] = b.upper + (t[above] - hi_val) / slope_hi

        mid_mask = ~(below | above)
        if np.any(mid_mask):
            tm = t[mid_mask]
            lo = np.full_like(tm, b.lower)
            hi = np.full_like(tm, b.upper)
            coef = self.coefficients
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                s = (mid - b.lower) / (b.upper - b.lower)
                val = _binom_rows(b.order, s) @ coef
                go_up = val < tm
                lo = np.where(go_up, mid, lo)
                hi = np.where(go_up, hi, mid)
            w[mid_mask] = 0.5 * (lo + hi)

        out = np.exp(w) if b.log_scale else w
        return float(out[0]) if scalar else out


def evaluate_basis(basis: BernsteinBasis, v):
    """Bernstein basis values at v; rows sum to one inside the bounds."""
    return basis.design_matrix(v)


def evaluate_transform(h: MonotoneTransform, v):
    return h(v)


def transform_derivative(h: MonotoneTransform, v):
    return h.derivative(v)


def default_bounds(values: np.ndarray, log_scale: bool = False) -> tuple[float, float]:
    """Observed min/max widened by 1% of the range (on the working scale)."""
    values = np.asarray(values, dtype=float)
    values = values[np.isfinite(values)]
    if log_scale:
        values = values[values > 0.0]
        values = np.log(values)
    if values.size == 0:
        raise ValueError("no finite values to derive bounds from")
    lo, hi = float(values.min()), float(values.max())
    if hi <= lo:
        raise ValueError("degenerate data: all values identical")
    pad = 0.01 * (hi - lo)
    return lo - pad, hi + pad
