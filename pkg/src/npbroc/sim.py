"""Simulation engine: data generation with calibrated censoring, exact ROC
oracles, an IPCW empirical baseline, RISE, and a replication benchmark.

Latent pairs are bivariate normal; margins are shaped by quantile maps, so
every generated joint law is a Gaussian copula whose time-dependent ROC
has a closed form on the latent scale.  Random streams use the
counter-based Philox generator keyed by (seed, stream), making every
replication reproducible independently of scheduling.
"""

from __future__ import annotations

import json
import time as _time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats
from scipy.special import ndtr, ndtri

from .exceptions import DataError, NpbError
from .joint import FitConfig, NpbModel, ObservationFrame, fit
from .margins import kaplan_meier
from .roc import RocCurve, _accuracy_from_latent, auc as model_auc

__all__ = [
    "DgpConfig",
    "GeneratedData",
    "censoring_offset",
    "generate_dataset",
    "true_roc",
    "true_auc",
    "rise",
    "empirical_baseline_roc",
    "run_benchmark",
    "run_benchmark_from_manifest",
    "misspecification_scenario",
]

_SQRT2 = np.sqrt(2.0)


class _NormalMixture:
    """Equal-weight mixture of N(1, 1) and N(4, 1.5^2)."""

    def cdf(self, y):
        y = np.asarray(y, dtype=float)
        return 0.5 * ndtr(y - 1.0) + 0.5 * ndtr((y - 4.0) / 1.5)

    def ppf(self, p):
        p = np.asarray(p, dtype=float)
        lo = np.full(p.shape, -12.0)
        hi = np.full(p.shape, 16.0)
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            go_up = self.cdf(mid) < p
            lo = np.where(go_up, mid, lo)
            hi = np.where(go_up, hi, mid)
        return 0.5 * (lo + hi)


_BIOMARKER_DISTS = {
    "normal": stats.norm(),
    "normal_mixture": _NormalMixture(),
    "chisq": stats.chi2(3),
}
_TIME_DISTS = {
    "lognormal": stats.lognorm(s=1.0),
    "weibull": stats.weibull_min(c=1.4, scale=1.0 / 2.0),
    "gamma": stats.gamma(a=1.5, scale=1.0 / 1.2),
}


@dataclass(frozen=True)
class DgpConfig:
    """One simulation scenario: sample size, dependence, margins, censoring."""

    n: int
    rho: float = -0.5
    biomarker_dist: str = "normal"
    time_dist: str = "weibull"
    censor_rate: float = 0.3
    covariate_effects: tuple[float, float] | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if not np.abs(self.rho) < 1.0:
            raise ValueError(f"|rho| must be < 1, got {self.rho}")
        if not 0.0 <= self.censor_rate < 1.0:
            raise ValueError(f"censor_rate must lie in [0, 1), got {self.censor_rate}")
        if self.biomarker_dist not in _BIOMARKER_DISTS:
            raise ValueError(
                f"unknown biomarker_dist {self.biomarker_dist!r}; choose from {sorted(_BIOMARKER_DISTS)}"
            )
        if self.time_dist not in _TIME_DISTS:
            raise ValueError(
                f"unknown time_dist {self.time_dist!r}; choose from {sorted(_TIME_DISTS)}"
            )
        if self.n < 1:
            raise ValueError("n must be positive")


@dataclass(frozen=True)
class GeneratedData:
    """A generated dataset plus its uncensored ground truth."""

    frame: ObservationFrame
    t_true: np.ndarray
    censor_times: np.ndarray
    y: np.ndarray
    x: np.ndarray | None


def censoring_offset(kappa: float) -> float:
    """Latent offset giving censoring probability kappa exactly.

    The censoring time is drawn as C = Q_T(Phi(Z_C - a)) with an
    independent standard normal Z_C, so P(T > C) = Phi(a / sqrt(2)) and
    a = Phi^{-1}(kappa) * sqrt(2) hits the target for any event margin.
    """
    if not 0.0 < kappa < 1.0:
        raise ValueError(f"censoring rate must lie strictly in (0, 1), got {kappa}")
    return float(ndtri(kappa) * _SQRT2)


def _rng_for(seed: int, stream: int = 0) -> np.random.Generator:
    key = np.array([np.uint64(seed & 0xFFFFFFFFFFFFFFFF), np.uint64(stream)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def generate_dataset(config: DgpConfig, stream: int = 0) -> GeneratedData:
    """Draw one right-censored dataset from the configured Gaussian copula."""
    rng = _rng_for(config.seed, stream)
    n = config.n
    z1 = rng.standard_normal(n)
    z2 = config.rho * z1 + np.sqrt(1.0 - config.rho**2) * rng.standard_normal(n)

    x = None
    if config.covariate_effects is not None:
        gamma_y, gamma_t = config.covariate_effects
        x = rng.uniform(size=n)
        z1 = z1 + gamma_y * x
        z2 = z2 + gamma_t * x

    dist_y = _BIOMARKER_DISTS[config.biomarker_dist]
    dist_t = _TIME_DISTS[config.time_dist]
    y = np.asarray(dist_y.ppf(ndtr(z1)), dtype=float)
    t_true = np.asarray(dist_t.ppf(ndtr(z2)), dtype=float)

    if config.censor_rate > 0.0:
        a = censoring_offset(config.censor_rate)
        z_c = rng.standard_normal(n)
        if x is not None:
            # shift the censoring latent like the event latent so the
            # target rate holds exactly within every covariate value
            z_c = z_c + config.covariate_effects[1] * x
        censor_times = np.asarray(dist_t.ppf(ndtr(z_c - a)), dtype=float)
    else:
        censor_times = np.full(n, np.inf)

    t_lower = np.minimum(t_true, censor_times)
    t_upper = np.where(t_true <= censor_times, t_true, np.inf)
    if x is None:
        frame = ObservationFrame(y, y, t_lower, t_upper)
    else:
        frame = ObservationFrame(y, y, t_lower, t_upper, x[:, None], ("x",))
    return GeneratedData(frame=frame, t_true=t_true, censor_times=censor_times, y=y, x=x)


def _latent_horizon(config: DgpConfig, t: float, x: float | None) -> float:
    z = float(ndtri(_TIME_DISTS[config.time_dist].cdf(t)))
    if config.covariate_effects is not None:
        if x is None:
            raise DataError("covariate DGP requires a covariate value for the oracle curve")
        z -= config.covariate_effects[1] * float(x)
    return z


def true_roc(config: DgpConfig, t: float, x: float | None = None, grid_size: int = 512) -> RocCurve:
    """Exact ROC curve of the generating law at horizon t.

    Ranks survive the monotone quantile maps, so the curve depends only on
    the latent correlation and the latent-scale horizon.
    """
    z_t = _latent_horizon(config, t, x)
    z_grid, fpr, tpr = _accuracy_from_latent(config.rho, z_t, grid_size)
    thresholds = np.empty_like(z_grid)
    thresholds[0], thresholds[-1] = np.inf, -np.inf
    interior = np.isfinite(z_grid)
    z_y = z_grid[interior]
    if config.covariate_effects is not None and x is not None:
        z_y = z_y + config.covariate_effects[0] * float(x)
    thresholds[interior] = _BIOMARKER_DISTS[config.biomarker_dist].ppf(ndtr(z_y))
    return RocCurve(
        horizon=float(t),
        x=None if x is None else np.atleast_1d(float(x)),
        thresholds=thresholds,
        fpr=fpr,
        tpr=tpr,
        auc=float(np.trapezoid(tpr, fpr)),
    )


def true_auc(config: DgpConfig, t: float, x: float | None = None, grid_size: int = 2048) -> float:
    return true_roc(config, t, x, grid_size).auc


def rise(estimated: RocCurve, truth: RocCurve) -> float:
    """Root integrated squared error between two ROC curves over p in [0,1]."""
    if estimated.fpr.size == 0 or truth.fpr.size == 0:
        raise DataError("empty ROC curve")
    p = np.unique(np.concatenate([estimated.fpr, truth.fpr]))
    a = np.interp(p, estimated.fpr, estimated.tpr)
    b = np.interp(p, truth.fpr, truth.tpr)
    return float(np.sqrt(np.trapezoid((a - b) ** 2, p)))


def empirical_baseline_roc(data, t: float, grid_size: int = 512) -> RocCurve:
    """IPCW empirical cumulative/dynamic ROC with Kaplan-Meier weights.

    Cases are subjects with an observed event by t, weighted by the inverse
    KM estimate of the censoring survival at their event time; controls are
    subjects still under observation beyond t (shared weight, cancelling).
    """
    frame = data.frame if isinstance(data, GeneratedData) else data
    observed = frame.t_lower
    event = np.isfinite(frame.t_upper)
    y = np.where(np.isfinite(frame.y_upper), frame.y_upper, frame.y_lower)

    cases = event & (observed <= t)
    controls = observed > t
    if not np.any(cases) or not np.any(controls):
        raise DataError(f"horizon {t!r} leaves no cases or no controls")

    if np.all(event):
        w_case = np.ones(int(cases.sum()))
    else:
        km_c = kaplan_meier(observed, ~event)  # censoring distribution
        g = km_c.survival_at(observed[cases] - 1e-12)
        g = np.maximum(g, 1e-10)
        w_case = 1.0 / g

    y_case = y[cases]
    y_ctrl = y[controls]
    qs = (np.arange(grid_size) + 0.5) / grid_size
    thr = np.quantile(y, qs)
    thresholds = np.concatenate([[np.inf], thr[::-1], [-np.inf]])
    # P(Y > c) among weighted cases and the control fraction below c
    tpr = np.array(
        [0.0]
        + [float(np.sum(w_case[y_case > c]) / np.sum(w_case)) for c in thr[::-1]]
        + [1.0]
    )
    fpr = np.array([0.0] + [float(np.mean(y_ctrl > c)) for c in thr[::-1]] + [1.0])
    tpr = np.maximum.accumulate(np.clip(tpr, 0.0, 1.0))
    fpr = np.maximum.accumulate(np.clip(fpr, 0.0, 1.0))
    return RocCurve(
        horizon=float(t),
        x=None,
        thresholds=thresholds,
        fpr=fpr,
        tpr=tpr,
        auc=float(np.trapezoid(tpr, fpr)),
    )


# -- replication benchmark --------------------------------------------------

TIME_QUANTILES = (0.1, 0.25, 0.5, 0.75)


def _scenario_dict(config: DgpConfig) -> dict:
    return {
        "n": config.n,
        "rho": config.rho,
        "biomarker_dist": config.biomarker_dist,
        "time_dist": config.time_dist,
        "censor_rate": config.censor_rate,
        "covariate_effects": None
        if config.covariate_effects is None
        else list(config.covariate_effects),
    }


def _scenario_label(config: DgpConfig) -> str:
    return (
        f"{config.biomarker_dist}-{config.time_dist}-n{config.n}"
        f"-rho{config.rho:g}-k{config.censor_rate:g}"
    )


def _replication(config: DgpConfig, stream: int) -> dict:
    """Fit one replication and measure accuracy against the oracle."""
    data = generate_dataset(config, stream)
    fitres = fit(data.frame, FitConfig(compute_covariance=False))
    model = fitres.model
    dist_t = _TIME_DISTS[config.time_dist]
    out = {
        "stream": stream,
        "rho_hat": float(model.rho()) if config.covariate_effects is None else float(model.rho(np.array([0.5]))),
        "loglik": fitres.loglik,
    }
    x_eval = None if config.covariate_effects is None else 0.5
    x_model = None if config.covariate_effects is None else np.array([0.5])
    for q in TIME_QUANTILES:
        t_q = float(dist_t.ppf(q))
        try:
            out[f"auc_q{q:g}"] = model_auc(model, t_q, x_model)
        except NpbError:
            out[f"auc_q{q:g}"] = np.nan
    t_med = float(dist_t.ppf(0.5))
    truth = true_roc(config, t_med, x_eval, grid_size=2048)
    from .roc import roc_curve as model_roc

    out["rise_npb"] = rise(model_roc(model, t_med, x_model), truth)
    try:
        out["rise_empirical"] = rise(empirical_baseline_roc(data, t_med), truth)
    except DataError:
        out["rise_empirical"] = np.nan
    if config.covariate_effects is None:
        out["beta_y_hat"] = np.nan
        out["beta_t_hat"] = np.nan
    else:
        out["beta_y_hat"] = float(model.margin_y.beta[0])
        out["beta_t_hat"] = float(model.margin_t.beta[0])
    return out


def _summaries(config: DgpConfig, records: list[dict]) -> list[dict]:
    """Aggregate per-replication records into report rows."""
    rows = []
    label = _scenario_label(config)
    dist_t = _TIME_DISTS[config.time_dist]
    x_eval = None if config.covariate_effects is None else 0.5

    def add(estimator, metric, value):
        rows.append(
            {"scenario": label, "estimator": estimator, "metric": metric, "value": float(value)}
        )

    if not records:
        add("npb", "n_ok", 0)
        return rows
    add("npb", "n_ok", len(records))
    for q in TIME_QUANTILES:
        vals = np.array([r[f"auc_q{q:g}"] for r in records])
        vals = vals[np.isfinite(vals)]
        if vals.size == 0:
            continue
        t_q = float(dist_t.ppf(q))
        oracle = true_auc(config, t_q, x_eval)
        add("npb", f"auc_mean_q{q:g}", vals.mean())
        add("npb", f"auc_sd_q{q:g}", vals.std(ddof=1) if vals.size > 1 else 0.0)
        add("oracle", f"auc_true_q{q:g}", oracle)
        add("npb", f"auc_bias_q{q:g}", vals.mean() - oracle)
    for estimator, keyname in (("npb", "rise_npb"), ("empirical", "rise_empirical")):
        vals = np.array([r[keyname] for r in records])
        vals = vals[np.isfinite(vals)]
        if vals.size == 0:
            continue
        q1, med, q3 = np.quantile(vals, [0.25, 0.5, 0.75])
        add(estimator, "rise_median", med)
        add(estimator, "rise_q1", q1)
        add(estimator, "rise_q3", q3)
    rho_hat = np.array([r["rho_hat"] for r in records])
    add("npb", "rho_mean", rho_hat.mean())
    add("npb", "rho_bias", rho_hat.mean() - config.rho)
    add("npb", "rho_sd", rho_hat.std(ddof=1) if rho_hat.size > 1 else 0.0)
    if config.covariate_effects is not None:
        by = np.array([r["beta_y_hat"] for r in records])
        bt = np.array([r["beta_t_hat"] for r in records])
        add("npb", "beta_y_bias", by.mean() - config.covariate_effects[0])
        add("npb", "beta_t_bias", bt.mean() - config.covariate_effects[1])
    return rows


def run_benchmark(scenarios, replications: int, seed: int, out_dir) -> dict:
    """Run a replication study over a scenario grid and write reports.

    Writes ``results.csv`` (one row per scenario, estimator, metric) and
    ``manifest.json`` (scenario grid, seed, replication count, versions,
    wall time, failures).  Replication streams are keyed by (seed, index),
    so results do not depend on evaluation order and any run can be
    reproduced from its manifest alone.
    """
    import csv
    from pathlib import Path

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    scenarios = [s if isinstance(s, DgpConfig) else DgpConfig(**s) for s in scenarios]
    t0 = _time.time()
    all_rows = []
    failures = []
    for s_idx, base in enumerate(scenarios):
        config = replace(base, seed=seed)
        records = []
        for rep in range(replications):
            stream = s_idx * 1_000_000 + rep
            try:
                records.append(_replication(config, stream))
            except NpbError as exc:
                failures.append(
                    {"scenario": _scenario_label(config), "stream": stream, "error": str(exc)}
                )
        all_rows.extend(_summaries(config, records))

    with open(out_dir / "results.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["scenario", "estimator", "metric", "value"])
        writer.writeheader()
        for row in all_rows:
            writer.writerow({**row, "value": repr(row["value"])})

    import npbroc

    manifest = {
        "seed": seed,
        "replications": replications,
        "scenarios": [_scenario_dict(s) for s in scenarios],
        "package_version": getattr(npbroc, "__version__", "unknown"),
        "numpy_version": np.__version__,
        "wall_time_s": _time.time() - t0,
        "n_failures": len(failures),
        "failures": failures,
    }
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    return {"rows": all_rows, "failures": failures, "manifest": manifest}


def run_benchmark_from_manifest(manifest_path, out_dir) -> dict:
    """Re-run a benchmark exactly as recorded in a manifest file."""
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    scenarios = []
    for s in manifest["scenarios"]:
        cov = s.get("covariate_effects")
        scenarios.append(
            DgpConfig(
                n=int(s["n"]),
                rho=float(s["rho"]),
                biomarker_dist=s["biomarker_dist"],
                time_dist=s["time_dist"],
                censor_rate=float(s["censor_rate"]),
                covariate_effects=None if cov is None else (float(cov[0]), float(cov[1])),
            )
        )
    return run_benchmark(scenarios, int(manifest["replications"]), int(manifest["seed"]), out_dir)


# -- dependence misspecification scenario ----------------------------------

_MISSPEC_CENSOR_RATE = 0.3
_MISSPEC_OFFSET_CACHE: dict[float, float] = {}


def _misspec_log_t(rng: np.random.Generator, n: int):
    x = rng.normal(1.0, 1.0, size=n)
    y = rng.normal(x, 1.0)
    z = np.log(-np.log(1.0 - rng.random(n)))  # minimum extreme value draw
    # proportional-hazards orientation: higher biomarker, shorter survival
    return x, y, -(y + 0.5 * x) + z


def _misspec_offset(kappa: float = _MISSPEC_CENSOR_RATE) -> float:
    """Offset a with P(log T - log T' > a) = kappa, via a fixed large draw."""
    if kappa not in _MISSPEC_OFFSET_CACHE:
        rng = _rng_for(987654321, 0)
        m = 1_000_000
        _, _, log_t = _misspec_log_t(rng, m)
        _, _, log_t2 = _misspec_log_t(rng, m)
        _MISSPEC_OFFSET_CACHE[kappa] = float(np.quantile(log_t - log_t2, 1.0 - kappa))
    return _MISSPEC_OFFSET_CACHE[kappa]


def misspecification_scenario(n: int, seed: int) -> GeneratedData:
    """Structural (regression-type) dependence outside the copula class.

    X ~ N(1,1); Y ~ N(x,1); log T = -(y + 0.5 x) + Z with Z following the
    minimum extreme value law, so higher biomarker values mean earlier
    events (a proportional-hazards Weibull in disguise).  Right-censoring at 30% comes from an
    independent copy of the event mechanism shifted by a calibrated offset.
    """
    if n < 1:
        raise ValueError("n must be positive")
    rng = _rng_for(seed, 1)
    x, y, log_t = _misspec_log_t(rng, n)
    _, _, log_c_base = _misspec_log_t(rng, n)
    log_c = log_c_base + _misspec_offset()
    t_true = np.exp(log_t)
    censor_times = np.exp(log_c)
    t_lower = np.minimum(t_true, censor_times)
    t_upper = np.where(t_true <= censor_times, t_true, np.inf)
    frame = ObservationFrame(y, y, t_lower, t_upper, x[:, None], ("x",))
    return GeneratedData(frame=frame, t_true=t_true, censor_times=censor_times, y=y, x=x)
