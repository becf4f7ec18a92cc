"""Covariate-specific time-dependent accuracy measures.

Cumulative-dynamic sensitivity and specificity, ROC curves with AUC and
Youden-optimal thresholds, incident-dynamic and incident-static variants,
and conditional survival within biomarker strata.  Everything reduces to
bivariate normal rectangle algebra on the latent scale.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from .bvn import bvn_cdf
from .exceptions import NumericError
from .joint import NpbModel
from .margins import MarginalModel

__all__ = [
    "RocCurve",
    "YoudenResult",
    "cumulative_sensitivity",
    "dynamic_specificity",
    "roc_curve",
    "auc",
    "youden",
    "incident_sensitivity",
    "incident_static_roc",
    "conditional_survival_given_marker_range",
    "export_roc_csv",
    "export_roc_json",
]

DENOMINATOR_GUARD = 1e-10
DEFAULT_GRID_SIZE = 512


@dataclass(frozen=True)
class RocCurve:
    """ROC curve at one horizon and covariate profile.

    Thresholds run from +inf down to -inf so that (fpr, tpr) moves
    monotonically from (0, 0) to (1, 1).
    """

    horizon: float
    x: np.ndarray | None
    thresholds: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray
    auc: float


@dataclass(frozen=True)
class YoudenResult:
    index: float
    threshold: float
    sensitivity: float
    specificity: float
    flat: bool


def _latent_value(margin: MarginalModel, v, x) -> float:
    """Latent normal score of one marginal value, tolerating infinite inputs."""
    v = float(v)
    if v == -np.inf:
        return -np.inf
    if v == np.inf:
        return np.inf
    if margin.transform.basis.log_scale and v <= 0.0:
        return -np.inf
    return float(margin.latent(v, x))


def _horizon_latent(model: NpbModel, t, x) -> float:
    z_t = _latent_value(model.margin_t, t, x)
    if not np.isfinite(z_t) and not np.isinf(z_t):
        raise NumericError(f"invalid horizon {t!r}")
    return z_t


def cumulative_sensitivity(model: NpbModel, c, t, x=None) -> float:
    """P(Y > c | T <= t, x): fraction of early events flagged by threshold c."""
    rho = model.rho(x)
    z_t = _horizon_latent(model, t, x)
    f_t = float(ndtr(z_t))
    if f_t <= DENOMINATOR_GUARD:
        raise NumericError(
            f"horizon {t!r} carries event probability {f_t:.3e}; sensitivity undefined"
        )
    z_y = _latent_value(model.margin_y, c, x)
    joint = float(bvn_cdf(z_y, z_t, rho))
    return float(np.clip((f_t - joint) / f_t, 0.0, 1.0))


def dynamic_specificity(model: NpbModel, c, t, x=None) -> float:
    """P(Y <= c | T > t, x): fraction of survivors below threshold c."""
    rho = model.rho(x)
    z_t = _horizon_latent(model, t, x)
    s_t = float(ndtr(-z_t))
    if s_t <= DENOMINATOR_GUARD:
        raise NumericError(
            f"horizon {t!r} carries survival probability {s_t:.3e}; specificity undefined"
        )
    z_y = _latent_value(model.margin_y, c, x)
    f_y = float(ndtr(z_y))
    joint = float(bvn_cdf(z_y, z_t, rho))
    return float(np.clip((f_y - joint) / s_t, 0.0, 1.0))


def _curve_arrays(model: NpbModel, z_t: float, x, grid_size: int):
    """Latent threshold grid (descending) with fpr/tpr arrays at horizon z_t."""
    return _accuracy_from_latent(model.rho(x), z_t, grid_size)


def _accuracy_from_latent(rho: float, z_t: float, grid_size: int):
    """ROC arrays from the latent correlation and latent-scale horizon alone."""
    f_t = float(ndtr(z_t))
    s_t = 1.0 - f_t
    if f_t <= DENOMINATOR_GUARD or s_t <= DENOMINATOR_GUARD:
        raise NumericError(
            f"horizon with event probability {f_t:.3e} leaves a denominator below the guard"
        )
    # quantile-spaced latent thresholds: the p-quantile of F_Y(.|x) maps to
    # the latent value ndtri(p) regardless of link or transformation
    p = (np.arange(grid_size) + 0.5) / grid_size
    z_grid = np.concatenate([[np.inf], ndtri(p)[::-1], [-np.inf]])
    f_y = ndtr(z_grid)
    joint = bvn_cdf(z_grid, np.full_like(z_grid, z_t), rho)
    tpr = np.clip((f_t - joint) / f_t, 0.0, 1.0)
    fpr = np.clip(1.0 - (f_y - joint) / s_t, 0.0, 1.0)
    # enforce the exact endpoints and monotone traversal
    tpr[0], fpr[0] = 0.0, 0.0
    tpr[-1], fpr[-1] = 1.0, 1.0
    tpr = np.maximum.accumulate(tpr)
    fpr = np.maximum.accumulate(fpr)
    return z_grid, fpr, tpr


def roc_curve(model: NpbModel, t, x=None, grid_size: int = DEFAULT_GRID_SIZE) -> RocCurve:
    """Cumulative-dynamic ROC curve on quantile-spaced thresholds plus endpoints."""
    z_t = _horizon_latent(model, t, x)
    z_grid, fpr, tpr = _curve_arrays(model, z_t, x, grid_size)
    thresholds = np.empty_like(z_grid)
    thresholds[0], thresholds[-1] = np.inf, -np.inf
    interior = np.isfinite(z_grid)
    p_interior = ndtr(z_grid[interior])
    thresholds[interior] = model.margin_y.quantile(
        p_interior, None if x is None else np.tile(np.atleast_1d(x), (p_interior.size, 1))
    )
    area = float(np.trapezoid(tpr, fpr))
    return RocCurve(
        horizon=float(t),
        x=None if x is None else np.atleast_1d(np.asarray(x, dtype=float)),
        thresholds=thresholds,
        fpr=fpr,
        tpr=tpr,
        auc=area,
    )


def auc(model: NpbModel, t, x=None, grid_size: int = DEFAULT_GRID_SIZE) -> float:
    """Trapezoidal area under the cumulative-dynamic ROC curve."""
    z_t = _horizon_latent(model, t, x)
    _, fpr, tpr = _curve_arrays(model, z_t, x, grid_size)
    return float(np.trapezoid(tpr, fpr))


def _youden_objective(model: NpbModel, z_t: float, rho: float, z_y):
    z_y = np.asarray(z_y, dtype=float)
    f_t = ndtr(z_t)
    s_t = 1.0 - f_t
    joint = bvn_cdf(z_y, np.full_like(z_y, z_t), rho)
    se = (f_t - joint) / f_t
    sp = (ndtr(z_y) - joint) / s_t
    return se + sp - 1.0, se, sp


_GOLDEN = 0.5 * (np.sqrt(5.0) - 1.0)


def youden(model: NpbModel, t, x=None, grid_size: int = DEFAULT_GRID_SIZE) -> YoudenResult:
    """Threshold maximizing Se + Sp - 1, refined between grid neighbors."""
    rho = model.rho(x)
    z_t = _horizon_latent(model, t, x)
    f_t = float(ndtr(z_t))
    if f_t <= DENOMINATOR_GUARD or 1.0 - f_t <= DENOMINATOR_GUARD:
        raise NumericError("horizon leaves a sensitivity or specificity denominator below the guard")
    p = (np.arange(grid_size) + 0.5) / grid_size
    z_grid = ndtri(p)
    j_grid, _, _ = _youden_objective(model, z_t, rho, z_grid)
    best = int(np.argmax(j_grid))
    j_best = float(j_grid[best])
    # thresholds tying with the maximum to float noise; a short run (as when
    # the peak falls midway between symmetric grid points) is refined like a
    # unique maximizer, while a long plateau marks an uninformative marker
    ties = np.flatnonzero(j_grid >= j_best - 1e-12)
    flat = ties.size > max(2, grid_size // 16) or j_best < 1e-12
    best = int(ties[0])  # smallest threshold among the tied maximizers

    lo = z_grid[max(best - 1, 0)]
    hi = z_grid[min(int(ties[-1]) + 1, grid_size - 1)] if not flat else z_grid[min(best + 1, grid_size - 1)]
    if flat:
        z_opt = z_grid[best]
    else:
        a, b = lo, hi
        c1 = b - _GOLDEN * (b - a)
        c2 = a + _GOLDEN * (b - a)
        f1 = _youden_objective(model, z_t, rho, c1)[0]
        f2 = _youden_objective(model, z_t, rho, c2)[0]
        for _ in range(60):
            if f1 >= f2:
                b, c2, f2 = c2, c1, f1
                c1 = b - _GOLDEN * (b - a)
                f1 = _youden_objective(model, z_t, rho, c1)[0]
            else:
                a, c1, f1 = c1, c2, f2
                c2 = a + _GOLDEN * (b - a)
                f2 = _youden_objective(model, z_t, rho, c2)[0]
            if b - a < 1e-12:
                break
        z_opt = 0.5 * (a + b)
    j_opt, se, sp = _youden_objective(model, z_t, rho, z_opt)
    threshold = float(
        model.margin_y.quantile(float(ndtr(z_opt)), None if x is None else np.atleast_1d(x))
    )
    return YoudenResult(
        index=float(np.clip(j_opt, 0.0, 1.0)),
        threshold=threshold,
        sensitivity=float(se),
        specificity=float(sp),
        flat=bool(flat),
    )


def incident_sensitivity(model: NpbModel, c, t, x=None) -> float:
    """P(Y > c | T = t, x): closed form from the latent conditional normal."""
    rho = model.rho(x)
    if abs(rho) >= 1.0:
        raise NumericError("incident sensitivity requires |rho| < 1")
    z_t = _horizon_latent(model, t, x)
    if not np.isfinite(z_t):
        raise NumericError("incident sensitivity requires a horizon with finite latent score")
    z_y = _latent_value(model.margin_y, c, x)
    if z_y == -np.inf:
        return 1.0
    if z_y == np.inf:
        return 0.0
    return float(ndtr((rho * z_t - z_y) / np.sqrt((1.0 - rho) * (1.0 + rho))))


def incident_static_roc(
    model: NpbModel, t, t_star, x=None, grid_size: int = DEFAULT_GRID_SIZE
) -> RocCurve:
    """Incident cases at t against static controls surviving beyond t_star."""
    rho = model.rho(x)
    z_t = _horizon_latent(model, t, x)
    z_star = _horizon_latent(model, t_star, x)
    s_star = float(ndtr(-z_star))
    if s_star <= DENOMINATOR_GUARD:
        raise NumericError(
            f"static horizon {t_star!r} carries survival probability {s_star:.3e}"
        )
    p = (np.arange(grid_size) + 0.5) / grid_size
    z_grid = np.concatenate([[np.inf], ndtri(p)[::-1], [-np.inf]])
    sq = np.sqrt((1.0 - rho) * (1.0 + rho))
    with np.errstate(invalid="ignore"):
        tpr = np.where(
            np.isinf(z_grid), np.where(z_grid > 0, 0.0, 1.0), ndtr((rho * z_t - z_grid) / sq)
        )
    joint = bvn_cdf(z_grid, np.full_like(z_grid, z_star), rho)
    fpr = np.clip(1.0 - (ndtr(z_grid) - joint) / s_star, 0.0, 1.0)
    tpr[0], fpr[0] = 0.0, 0.0
    tpr[-1], fpr[-1] = 1.0, 1.0
    tpr = np.maximum.accumulate(tpr)
    fpr = np.maximum.accumulate(fpr)
    thresholds = np.empty_like(z_grid)
    thresholds[0], thresholds[-1] = np.inf, -np.inf
    interior = np.isfinite(z_grid)
    p_interior = ndtr(z_grid[interior])
    thresholds[interior] = model.margin_y.quantile(
        p_interior, None if x is None else np.tile(np.atleast_1d(x), (p_interior.size, 1))
    )
    return RocCurve(
        horizon=float(t),
        x=None if x is None else np.atleast_1d(np.asarray(x, dtype=float)),
        thresholds=thresholds,
        fpr=fpr,
        tpr=tpr,
        auc=float(np.trapezoid(tpr, fpr)),
    )


def conditional_survival_given_marker_range(model: NpbModel, a, b, t, x=None) -> float:
    """P(T > t | a < Y <= b, x) by rectangle algebra on the joint CDF."""
    if not a < b:
        raise ValueError("marker bounds must satisfy a < b")
    rho = model.rho(x)
    z_t = _horizon_latent(model, t, x)
    z_a = _latent_value(model.margin_y, a, x)
    z_b = _latent_value(model.margin_y, b, x)
    mass = float(ndtr(z_b) - ndtr(z_a))
    if mass <= DENOMINATOR_GUARD:
        raise NumericError(f"marker stratum ({a!r}, {b!r}] carries probability {mass:.3e}")
    joint_b = float(bvn_cdf(z_b, z_t, rho))
    joint_a = float(bvn_cdf(z_a, z_t, rho))
    num = (float(ndtr(z_b)) - joint_b) - (float(ndtr(z_a)) - joint_a)
    return float(np.clip(num / mass, 0.0, 1.0))


def export_roc_csv(curves, path) -> None:
    """Write ROC curves as CSV rows (t, profile, threshold, fpr, tpr)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "profile", "threshold", "fpr", "tpr"])
        for i, curve in enumerate(curves):
            for c, f, s in zip(curve.thresholds, curve.fpr, curve.tpr):
                writer.writerow([curve.horizon, i, c, f, s])


def export_roc_json(summaries, path) -> None:
    """Write per-horizon summary records (dicts with AUC, thresholds, CIs)."""
    with open(path, "w") as fh:
        json.dump(list(summaries), fh, indent=2)
        fh.write("\n")
