"""Reparameterization between ordered coefficients and unconstrained vectors.

The first transformation coefficient is free; each subsequent one adds the
exponential of an unconstrained increment, which enforces monotonicity
without explicit constraints.
"""

from __future__ import annotations

import numpy as np

_MIN_LOG_INCREMENT = -30.0


def unconstrained_to_coef(raw: np.ndarray) -> np.ndarray:
    """(c, delta_1..delta_M) -> nondecreasing coefficient vector."""
    raw = np.asarray(raw, dtype=float)
    out = np.empty_like(raw)
    out[0] = raw[0]
    # overflow to inf only at absurd trial points; callers reject non-finite
    with np.errstate(over="ignore"):
        out[1:] = np.exp(raw[1:])
        return np.cumsum(out)


def coef_to_unconstrained(coef: np.ndarray) -> np.ndarray:
    coef = np.asarray(coef, dtype=float)
    diffs = np.maximum(np.diff(coef), np.exp(_MIN_LOG_INCREMENT))
    return np.concatenate([[coef[0]], np.log(diffs)])


def grad_to_unconstrained(grad_coef: np.ndarray, raw: np.ndarray) -> np.ndarray:
    """Chain rule: gradient w.r.t. coefficients -> gradient w.r.t. raw vector."""
    tail_sums = np.cumsum(grad_coef[::-1])[::-1]
    out = np.empty_like(tail_sums)
    out[0] = tail_sums[0]
    with np.errstate(invalid="ignore", over="ignore"):
        out[1:] = tail_sums[1:] * np.exp(np.asarray(raw, dtype=float)[1:])
    return out
