"""Standard bivariate normal CDF, density and derived interval probabilities.

The CDF uses the deterministic Drezner--Wesolowsky Gauss--Legendre scheme
with Genz's double-precision modifications for correlations close to one.
Every censored-likelihood term in this package reduces to a closed form
built from these primitives, so no runtime numerical integration is needed.

All functions broadcast over their arguments, including the correlation.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtr

__all__ = [
    "bvn_cdf",
    "bvn_pdf",
    "conditional_normal",
    "strip_probability",
    "rectangle_probability",
]

_TWO_PI = 2.0 * np.pi

# Gauss-Legendre nodes/weights (n = 20 on [-1, 1], folded to 20 points below)
_GL_X = np.array(
    [
        0.9931285991850949, 0.9639719272779138, 0.9122344282513259,
        0.8391169718222188, 0.7463319064601508, 0.6360536807265150,
        0.5108670019508271, 0.3737060887154196, 0.2277858511416451,
        0.07652652113349733,
    ]
)
_GL_W = np.array(
    [
        0.01761400713915212, 0.04060142980038694, 0.06267204833410906,
        0.08327674157670475, 0.1019301198172404, 0.1181945319615184,
        0.1316886384491766, 0.1420961093183821, 0.1491729864726037,
        0.1527533871307259,
    ]
)
_NODES = np.concatenate([1.0 - _GL_X, 1.0 + _GL_X])
_WEIGHTS = np.concatenate([_GL_W, _GL_W])


def _phi(z):
    return np.exp(-0.5 * z * z) / np.sqrt(_TWO_PI)


def _bvnu_moderate(h, k, r):
    """P(X > h, Y > k) for |r| < 0.925 via the tetrachoric-series quadrature."""
    hk = h * k
    hs = 0.5 * (h * h + k * k)
    asr = 0.5 * np.arcsin(r)
    sn = np.sin(asr[..., None] * _NODES)
    integrand = np.exp((sn * hk[..., None] - hs[..., None]) / (1.0 - sn**2))
    total = integrand @ _WEIGHTS
    return total * asr / _TWO_PI + ndtr(-h) * ndtr(-k)


def _bvnu_extreme(h, k, r):
    """P(X > h, Y > k) for 0.925 <= |r| < 1 via Genz's expansion."""
    h = h.copy()
    k = np.where(r < 0, -k, k)
    hk = h * k
    bvn = np.zeros_like(h)

    a_sq = (1.0 - r) * (1.0 + r)
    a = np.sqrt(a_sq)
    bs = (h - k) ** 2
    c = (4.0 - hk) / 8.0
    d = (12.0 - hk) / 80.0
    asr = -0.5 * (bs / a_sq + hk)
    m = asr > -100.0
    bvn = np.where(
        m,
        a * np.exp(asr) * (1.0 - c * (bs - a_sq) * (1.0 - d * bs) / 3.0 + c * d * a_sq**2),
        bvn,
    )
    m = hk > -100.0
    b = np.sqrt(bs)
    sp = np.sqrt(_TWO_PI) * ndtr(-b / np.maximum(a, 1e-300))
    bvn = np.where(m, bvn - np.exp(-0.5 * hk) * sp * b * (1.0 - c * bs * (1.0 - d * bs) / 3.0), bvn)

    a_half = 0.5 * a
    xs = (a_half[..., None] * _NODES) ** 2
    asr = -0.5 * (bs[..., None] / xs + hk[..., None])
    sp = 1.0 + c[..., None] * xs * (1.0 + 5.0 * d[..., None] * xs)
    rs = np.sqrt(1.0 - xs)
    ep = np.exp(-0.5 * hk[..., None] * xs / (1.0 + rs) ** 2) / rs
    terms = np.where(asr > -100.0, np.exp(asr) * (sp - ep), 0.0)
    bvn = (a_half * (terms @ _WEIGHTS) - bvn) / _TWO_PI

    pos = r > 0
    tail = ndtr(-np.maximum(h, k))
    swap = h >= k
    low = np.where(h < 0, ndtr(k) - ndtr(h), ndtr(-h) - ndtr(-k))
    return np.where(pos, bvn + tail, np.where(swap, -bvn, low - bvn))


def _bvnu(dh, dk, r):
    """P(X > dh, Y > dk) for standard bivariate normal with correlation r."""
    out = np.empty(np.broadcast(dh, dk, r).shape, dtype=float)
    dh, dk, r = np.broadcast_arrays(dh, dk, r)

    upper_inf = (dh == np.inf) | (dk == np.inf)
    both_low = (dh == -np.inf) & (dk == -np.inf)
    h_low = (dh == -np.inf) & ~both_low
    k_low = (dk == -np.inf) & ~both_low
    out[upper_inf] = 0.0
    out[both_low] = 1.0
    out[h_low] = ndtr(-dk[h_low])
    out[k_low] = ndtr(-dh[k_low])

    fin = ~(upper_inf | both_low | h_low | k_low)
    unit = fin & (np.abs(r) == 1.0)
    if np.any(unit):
        h, k, rr = dh[unit], dk[unit], r[unit]
        # degenerate copulas: comonotone (r=1) and countermonotone (r=-1)
        pos = rr > 0
        out[unit] = np.where(
            pos,
            ndtr(-np.maximum(h, k)),
            np.maximum(0.0, ndtr(-h) - ndtr(k)),
        )
        fin = fin & ~unit

    mod = fin & (np.abs(r) < 0.925)
    if np.any(mod):
        out[mod] = _bvnu_moderate(dh[mod], dk[mod], r[mod])
    ext = fin & ~mod
    if np.any(ext):
        out[ext] = _bvnu_extreme(dh[ext], dk[ext], r[ext])
    return np.clip(out, 0.0, 1.0)


def _validate_rho(rho, strict: bool = False):
    rho = np.asarray(rho, dtype=float)
    if np.any(np.isnan(rho)):
        raise ValueError("correlation must not be NaN")
    lim = 1.0
    if strict:
        if np.any(np.abs(rho) >= lim):
            raise ValueError("correlation must satisfy |rho| < 1")
    elif np.any(np.abs(rho) > lim):
        raise ValueError("correlation must satisfy |rho| <= 1")
    return rho


def bvn_cdf(z1, z2, rho):
    """P(Z1 <= z1, Z2 <= z2) for standard bivariate normal with correlation rho."""
    rho = _validate_rho(rho)
    z1 = np.asarray(z1, dtype=float)
    z2 = np.asarray(z2, dtype=float)
    if np.any(np.isnan(z1)) or np.any(np.isnan(z2)):
        raise ValueError("bvn_cdf arguments must not be NaN")
    out = _bvnu(-z1, -z2, rho)
    return out if out.ndim else float(out)


def bvn_pdf(z1, z2, rho):
    """Standard bivariate normal density at (z1, z2)."""
    rho = _validate_rho(rho, strict=True)
    z1 = np.asarray(z1, dtype=float)
    z2 = np.asarray(z2, dtype=float)
    q = (1.0 - rho) * (1.0 + rho)
    with np.errstate(invalid="ignore"):
        quad = (z1 * z1 - 2.0 * rho * z1 * z2 + z2 * z2) / q
        out = np.exp(-0.5 * quad) / (_TWO_PI * np.sqrt(q))
    # infinite arguments carry zero density
    out = np.where(np.isinf(z1) | np.isinf(z2), 0.0, out)
    return out if out.ndim else float(out)


def conditional_normal(z_given, rho):
    """Mean and sd of Z1 | Z2 = z_given under correlation rho."""
    rho = _validate_rho(rho, strict=True)
    z_given = np.asarray(z_given, dtype=float)
    mean = rho * z_given
    sd = np.sqrt((1.0 - rho) * (1.0 + rho)) * np.ones_like(mean)
    if mean.ndim:
        return mean, sd
    return float(mean), float(sd)


def strip_probability(z_fixed, a, b, rho):
    """Closed form of the single integral of the bivariate density over one strip.

    Equals phi(z_fixed) * [Phi((b - rho z)/s) - Phi((a - rho z)/s)] with
    s = sqrt(1 - rho^2); a <= b, infinite endpoints allowed.
    """
    rho = _validate_rho(rho, strict=True)
    z_fixed = np.asarray(z_fixed, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any(a > b):
        raise ValueError("strip bounds must satisfy a <= b")
    s = np.sqrt((1.0 - rho) * (1.0 + rho))
    with np.errstate(invalid="ignore"):
        hi = np.where(np.isinf(b), np.where(b > 0, 1.0, 0.0), ndtr((b - rho * z_fixed) / s))
        lo = np.where(np.isinf(a), np.where(a > 0, 1.0, 0.0), ndtr((a - rho * z_fixed) / s))
    out = _phi(z_fixed) * (hi - lo)
    return out if out.ndim else float(out)


def rectangle_probability(a1, b1, a2, b2, rho):
    """P(a1 < Z1 <= b1, a2 < Z2 <= b2), clipped to [0, 1] at float-noise level."""
    rho = _validate_rho(rho)
    a1, b1, a2, b2 = (np.asarray(v, dtype=float) for v in (a1, b1, a2, b2))
    if np.any(a1 > b1) or np.any(a2 > b2):
        raise ValueError("rectangle bounds must satisfy lower <= upper")
    p = (
        _bvnu(a1, a2, rho)
        - _bvnu(b1, a2, rho)
        - _bvnu(a1, b2, rho)
        + _bvnu(b1, b2, rho)
    )
    out = np.clip(p, 0.0, 1.0)
    return out if out.ndim else float(out)
