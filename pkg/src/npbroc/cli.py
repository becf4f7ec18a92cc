"""Command-line interface: fit, evaluate, diagnose, simulate, benchmark.

Every command is a thin wrapper over the library; identical inputs give
identical outputs.  Exit codes: 0 success, 2 input/schema error, 3
non-convergence, 4 numeric failure.
"""

from __future__ import annotations

import csv
import functools
import json
import sys

import click
import numpy as np

from . import diagnostics as diag
from . import roc as rocmod
from . import sim as simmod
from .exceptions import ConvergenceError, DataError, NumericError, SingularHessianError
from .joint import (
    FitConfig,
    FitResult,
    ObservationFrame,
    confidence_intervals,
    fit,
    sample_models,
)
from .serialize import FORMAT_VERSION, load_model, model_to_dict

EXIT_SCHEMA = 2
EXIT_NONCONVERGENCE = 3
EXIT_NUMERIC = 4

_RESERVED = ("y", "y_lower", "y_upper", "t", "t_lower", "t_upper", "status")


def _translate_errors(func):
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except DataError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_SCHEMA)
        except ConvergenceError as exc:
            click.echo(f"error: optimization did not converge: {exc}", err=True)
            sys.exit(EXIT_NONCONVERGENCE)
        except (NumericError, SingularHessianError) as exc:
            click.echo(f"error: numeric failure: {exc}", err=True)
            sys.exit(EXIT_NUMERIC)

    return wrapper


def _parse_float(text: str, row: int, column: str) -> float:
    text = text.strip()
    if text == "":
        raise DataError(f"missing value in column {column!r} on data row {row}")
    try:
        return float(text)  # accepts Inf/-Inf literals
    except ValueError as exc:
        raise DataError(f"cannot parse {text!r} in column {column!r} on data row {row}") from exc


def read_data_csv(path) -> ObservationFrame:
    """Read observations from CSV.

    Required columns: y_lower,y_upper (or the convenience column y for exact
    values) and t_lower,t_upper (or t with status: 1=event, 0=right-censored).
    Every other column is a covariate; missing values are a hard error.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file; a header row is required") from None
        rows = list(reader)
    header = [h.strip() for h in header]
    cols = {name: i for i, name in enumerate(header)}
    if len(cols) != len(header):
        raise DataError(f"{path}: duplicate column names in header")

    if "y_lower" in cols and "y_upper" in cols:
        y_cols = ("y_lower", "y_upper")
    elif "y" in cols:
        y_cols = ("y", "y")
    else:
        raise DataError(f"{path}: need columns y_lower,y_upper or y (found {header})")
    if "t_lower" in cols and "t_upper" in cols:
        t_cols = ("t_lower", "t_upper")
        status_col = None
    elif "t" in cols and "status" in cols:
        t_cols = ("t", "t")
        status_col = "status"
    else:
        raise DataError(f"{path}: need columns t_lower,t_upper or t,status (found {header})")
    cov_names = [h for h in header if h not in _RESERVED]

    n = len(rows)
    if n == 0:
        raise DataError(f"{path}: no data rows")
    y_lo = np.empty(n)
    y_hi = np.empty(n)
    t_lo = np.empty(n)
    t_hi = np.empty(n)
    x = np.empty((n, len(cov_names)))
    for i, row in enumerate(rows, start=1):
        if len(row) != len(header):
            raise DataError(f"{path}: data row {i} has {len(row)} fields, expected {len(header)}")
        y_lo[i - 1] = _parse_float(row[cols[y_cols[0]]], i, y_cols[0])
        y_hi[i - 1] = _parse_float(row[cols[y_cols[1]]], i, y_cols[1])
        t_lo[i - 1] = _parse_float(row[cols[t_cols[0]]], i, t_cols[0])
        t_hi[i - 1] = _parse_float(row[cols[t_cols[1]]], i, t_cols[1])
        if status_col is not None:
            status = _parse_float(row[cols[status_col]], i, status_col)
            if status not in (0.0, 1.0):
                raise DataError(f"{path}: status must be 0 or 1 on data row {i}")
            if status == 0.0:
                t_hi[i - 1] = np.inf
        if y_lo[i - 1] > y_hi[i - 1]:
            raise DataError(f"{path}: y_lower > y_upper on data row {i}")
        if t_lo[i - 1] > t_hi[i - 1]:
            raise DataError(f"{path}: t_lower > t_upper on data row {i}")
        if t_lo[i - 1] < 0:
            raise DataError(f"{path}: negative event time on data row {i}")
        for j, name in enumerate(cov_names):
            x[i - 1, j] = _parse_float(row[cols[name]], i, name)
    try:
        return ObservationFrame(
            y_lo, y_hi, t_lo, t_hi, x if cov_names else None, tuple(cov_names)
        )
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from exc


def _load_config_file(path) -> dict:
    if str(path).endswith(".toml"):
        import tomli

        with open(path, "rb") as fh:
            try:
                return tomli.load(fh)
            except tomli.TOMLDecodeError as exc:
                raise DataError(f"{path}: invalid TOML: {exc}") from exc
    with open(path) as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: invalid JSON: {exc}") from exc


def _fit_config_from_dict(d: dict) -> FitConfig:
    allowed = set(FitConfig.__dataclass_fields__)
    unknown = set(d) - allowed
    if unknown:
        raise DataError(f"unknown fit options {sorted(unknown)}; allowed: {sorted(allowed)}")
    for key in ("bounds_y", "bounds_t"):
        if d.get(key) is not None:
            d[key] = tuple(float(v) for v in d[key])
    return FitConfig(**d)


def _fit_result_to_metadata(res: FitResult) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "loglik": res.loglik,
        "gradient_norm": res.gradient_norm,
        "theta": res.theta.tolist(),
        "param_names": list(res.param_names),
        "covariance": None if res.covariance is None else res.covariance.tolist(),
    }


def load_model_with_uncertainty(path):
    """Load a model plus, when present, the stored fit result for CIs."""
    model = load_model(path)
    with open(path) as fh:
        doc = json.load(fh)
    meta = doc.get("metadata")
    if not meta or meta.get("covariance") is None:
        return model, None
    res = FitResult(
        model=model,
        loglik=float(meta["loglik"]),
        gradient_norm=float(meta["gradient_norm"]),
        covariance=np.asarray(meta["covariance"], dtype=float),
        theta=np.asarray(meta["theta"], dtype=float),
        param_names=list(meta["param_names"]),
        convergence_report={},
    )
    return model, res


def _fit_summary_text(res: FitResult, level: float = 0.95) -> str:
    lines = [
        f"log-likelihood: {res.loglik:.6f}",
        f"gradient inf-norm: {res.gradient_norm:.3e}",
        "",
    ]
    have_ci = res.covariance is not None

    def block(title, prefix, names):
        lines.append(title)
        any_row = False
        for name in names:
            if not name.startswith(prefix):
                continue
            any_row = True
            idx = res.param_names.index(name)
            est = res.theta[idx]
            if have_ci:
                lo, hi = confidence_intervals(res, name, level)
                lines.append(f"  {name[len(prefix):]:<20s} {est: .4f}  [{lo: .4f}, {hi: .4f}]")
            else:
                lines.append(f"  {name[len(prefix):]:<20s} {est: .4f}  [CI unavailable]")
        if not any_row:
            lines.append("  (no covariates)")
        lines.append("")

    block("biomarker margin coefficients:", "beta_y:", res.param_names)
    block("event-time margin coefficients:", "beta_t:", res.param_names)

    dep = res.model.dependence
    if dep.form == "none":
        lines.append("correlation: fixed at 0 (independence working model)")
    elif dep.form == "constant":
        rho = res.model.rho()
        if have_ci:
            lo, hi = confidence_intervals(res, "rho", level)
            lines.append(f"correlation rho: {rho: .4f}  [{lo: .4f}, {hi: .4f}]")
        else:
            lines.append(f"correlation rho: {rho: .4f}  [CI unavailable]")
    else:
        block("correlation coefficients (lambda scale):", "dep:", res.param_names)
    lines.append("")
    return "\n".join(lines)


@click.group()
def main() -> None:
    """Prognostic biomarker accuracy for censored event times."""


@main.command("fit")
@click.argument("input_csv", type=click.Path(exists=True, dir_okay=False))
@click.option("--output", "-o", required=True, type=click.Path(dir_okay=False), help="Model JSON path.")
@click.option("--config", type=click.Path(exists=True, dir_okay=False), help="Fit options (TOML/JSON).")
@click.option("--summary", type=click.Path(dir_okay=False), help="Also write the text summary here.")
@_translate_errors
def cmd_fit(input_csv, output, config, summary) -> None:
    """Fit the joint model to CSV data and write a versioned model file."""
    frame = read_data_csv(input_csv)
    fit_config = _fit_config_from_dict(_load_config_file(config)) if config else FitConfig()
    res = fit(frame, fit_config)
    doc = model_to_dict(res.model, metadata=_fit_result_to_metadata(res))
    with open(output, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
    text = _fit_summary_text(res)
    click.echo(text)
    if summary:
        with open(summary, "w") as fh:
            fh.write(text)


def _parse_profile(text: str, covariate_names) -> np.ndarray:
    values = dict.fromkeys(covariate_names, None)
    for piece in text.split(","):
        if "=" not in piece:
            raise DataError(f"profile entry {piece!r} is not name=value")
        name, _, raw = piece.partition("=")
        name = name.strip()
        if name not in values:
            raise DataError(f"unknown covariate {name!r}; model has {list(covariate_names)}")
        values[name] = _parse_float(raw, 0, name)
    missing = [k for k, v in values.items() if v is None]
    if missing:
        raise DataError(f"profile is missing covariates {missing}")
    return np.array([values[k] for k in covariate_names])


def _summary_for_cell(model, t, x, grid_size):
    y = rocmod.youden(model, t, x, grid_size)
    return {
        "auc": rocmod.auc(model, t, x, grid_size),
        "youden_index": y.index,
        "threshold": y.threshold,
        "sensitivity": y.sensitivity,
        "specificity": y.specificity,
    }


_SUMMARY_METRICS = ("auc", "youden_index", "threshold", "sensitivity", "specificity")


@main.command("roc")
@click.argument("model_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--horizon", "-t", "horizons", multiple=True, required=True, type=float)
@click.option("--profile", "profiles", multiple=True, help="Covariate profile name=value,name=value.")
@click.option("--covariate-table", type=click.Path(exists=True, dir_okay=False),
              help="CSV of covariate rows for the population-averaged AUC.")
@click.option("--output", "-o", required=True, type=click.Path(dir_okay=False),
              help="Summary table (.json for JSON, otherwise CSV).")
@click.option("--points", type=click.Path(dir_okay=False), help="Also write ROC points as CSV.")
@click.option("--grid-size", default=rocmod.DEFAULT_GRID_SIZE, show_default=True)
@click.option("--level", default=0.95, show_default=True, help="Confidence level.")
@click.option("--ci-draws", default=2000, show_default=True, help="Parameter draws for CIs.")
@click.option("--seed", default=0, show_default=True)
@_translate_errors
def cmd_roc(model_path, horizons, profiles, covariate_table, output, points,
            grid_size, level, ci_draws, seed) -> None:
    """Per-horizon ROC summaries (AUC, Youden threshold, Se/Sp) with CIs."""
    model, fitres = load_model_with_uncertainty(model_path)
    names = model.margin_y.covariate_names
    if names and not profiles and not covariate_table:
        raise DataError(f"model uses covariates {list(names)}; pass --profile or --covariate-table")
    xs = [(text, _parse_profile(text, names)) for text in profiles] if names else [("", None)]

    drawn = None
    if fitres is not None and ci_draws > 0:
        drawn = sample_models(fitres, ci_draws, np.random.default_rng(seed))

    alpha = 1.0 - level
    rows = []
    curves = []
    for t in horizons:
        for label, x in xs:
            cell = _summary_for_cell(model, t, x, grid_size)
            row = {"t": t, "profile": label}
            for key in _SUMMARY_METRICS:
                row[key] = cell[key]
                row[f"{key}_lower"] = row[f"{key}_upper"] = cell[key]
            if drawn is not None:
                samples = {k: [] for k in _SUMMARY_METRICS}
                for m in drawn:
                    try:
                        s = _summary_for_cell(m, t, x, grid_size)
                    except (NumericError, DataError):
                        continue
                    for k in _SUMMARY_METRICS:
                        samples[k].append(s[k])
                for k in _SUMMARY_METRICS:
                    vals = np.asarray(samples[k])
                    if vals.size >= ci_draws / 2:
                        lo, hi = np.quantile(vals, [alpha / 2.0, 1.0 - alpha / 2.0])
                        row[f"{k}_lower"] = min(float(lo), row[k])
                        row[f"{k}_upper"] = max(float(hi), row[k])
            rows.append(row)
            curves.append(rocmod.roc_curve(model, t, x, grid_size))
        if covariate_table:
            table = read_data_csv_covariates(covariate_table, names)
            aucs = [rocmod.auc(model, t, xi, grid_size) for xi in table]
            row = {"t": t, "profile": "population_mean", "auc": float(np.mean(aucs))}
            row["auc_lower"] = row["auc_upper"] = row["auc"]
            if drawn is not None:
                means = []
                for m in drawn:
                    try:
                        means.append(np.mean([rocmod.auc(m, t, xi, grid_size) for xi in table]))
                    except (NumericError, DataError):
                        continue
                if len(means) >= ci_draws / 2:
                    lo, hi = np.quantile(means, [alpha / 2.0, 1.0 - alpha / 2.0])
                    row["auc_lower"] = min(float(lo), row["auc"])
                    row["auc_upper"] = max(float(hi), row["auc"])
            for k in _SUMMARY_METRICS[1:]:
                row[k] = row[f"{k}_lower"] = row[f"{k}_upper"] = ""
            rows.append(row)

    fieldnames = ["t", "profile"]
    for k in _SUMMARY_METRICS:
        fieldnames += [k, f"{k}_lower", f"{k}_upper"]
    if str(output).endswith(".json"):
        with open(output, "w") as fh:
            json.dump({"format_version": FORMAT_VERSION, "summaries": rows}, fh, indent=2)
            fh.write("\n")
    else:
        with open(output, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=fieldnames)
            writer.writeheader()
            writer.writerows(rows)
    if points:
        rocmod.export_roc_csv(curves, points)


def read_data_csv_covariates(path, names) -> list[np.ndarray]:
    """Read covariate rows (columns must include every model covariate)."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DataError(f"{path}: empty file")
        missing = [n for n in names if n not in reader.fieldnames]
        if missing:
            raise DataError(f"{path}: missing covariate columns {missing}")
        rows = []
        for i, record in enumerate(reader, start=1):
            rows.append(np.array([_parse_float(record[n], i, n) for n in names]))
    if not rows:
        raise DataError(f"{path}: no data rows")
    return rows


@main.command("diagnose")
@click.argument("model_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("input_csv", type=click.Path(exists=True, dir_okay=False))
@click.option("--pit", required=True, type=click.Path(dir_okay=False), help="PIT values CSV.")
@click.option("--summary", required=True, type=click.Path(dir_okay=False), help="KS summary JSON.")
@click.option("--seed", default=0, show_default=True)
@_translate_errors
def cmd_diagnose(model_path, input_csv, pit, summary, seed) -> None:
    """Calibration diagnostics: PIT values and KS uniformity statistics."""
    model = load_model(model_path)
    frame = read_data_csv(input_csv)
    names = model.margin_y.covariate_names
    missing = [n for n in names if n not in frame.covariate_names]
    if missing:
        raise DataError(f"{input_csv}: missing model covariate columns {missing}")
    if names and tuple(frame.covariate_names) != tuple(names):
        order = [frame.covariate_names.index(n) for n in names]
        frame = ObservationFrame(
            frame.y_lower, frame.y_upper, frame.t_lower, frame.t_upper,
            frame.x[:, order], tuple(names),
        )
    u1 = diag.pit_event_time(model, frame, seed)
    u2 = diag.pit_biomarker_conditional(model, frame, seed)
    censored = ~np.isfinite(frame.t_upper)
    diag.export_pit_csv(u1, u2, censored, pit)
    report = diag.pit_summary(model, frame, seed)
    report["format_version"] = FORMAT_VERSION
    report["seed"] = seed
    diag.export_pit_json(report, summary)
    click.echo(json.dumps({k: report[k] for k in ("u1", "u2")}, indent=2))


def _dgp_config_from_dict(d: dict) -> simmod.DgpConfig:
    d = dict(d)
    cov = d.get("covariate_effects")
    if cov is not None:
        d["covariate_effects"] = (float(cov[0]), float(cov[1]))
    allowed = set(simmod.DgpConfig.__dataclass_fields__)
    unknown = set(d) - allowed
    if unknown:
        raise DataError(f"unknown scenario options {sorted(unknown)}; allowed: {sorted(allowed)}")
    try:
        return simmod.DgpConfig(**d)
    except (ValueError, TypeError) as exc:
        raise DataError(f"invalid scenario: {exc}") from exc


@main.command("simulate")
@click.option("--config", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Scenario file (TOML/JSON) with the data-generating settings.")
@click.option("--output", "-o", required=True, type=click.Path(dir_okay=False), help="Dataset CSV.")
@click.option("--truth", type=click.Path(dir_okay=False),
              help="Also write uncensored event and censoring times.")
@click.option("--stream", default=0, show_default=True, help="Replication stream index.")
@_translate_errors
def cmd_simulate(config, output, truth, stream) -> None:
    """Generate one synthetic dataset in the fit-ready CSV schema."""
    cfg = _dgp_config_from_dict(_load_config_file(config))
    data = simmod.generate_dataset(cfg, stream)
    frame = data.frame
    header = ["y_lower", "y_upper", "t_lower", "t_upper", *frame.covariate_names]
    with open(output, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(len(frame)):
            row = [frame.y_lower[i], frame.y_upper[i], frame.t_lower[i], frame.t_upper[i]]
            if frame.x is not None:
                row += list(frame.x[i])
            writer.writerow([repr(float(v)) for v in row])
    if truth:
        with open(truth, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t_true", "censor_time"])
            for a, b in zip(data.t_true, data.censor_times):
                writer.writerow([repr(float(a)), repr(float(b))])
    click.echo(f"wrote {len(frame)} rows to {output}")


@main.command("benchmark")
@click.option("--config", type=click.Path(exists=True, dir_okay=False),
              help="TOML/JSON with replications, seed, and a scenarios list.")
@click.option("--from-manifest", type=click.Path(exists=True, dir_okay=False),
              help="Re-run exactly as recorded in a previous manifest.")
@click.option("--out-dir", "-o", required=True, type=click.Path(file_okay=False))
@_translate_errors
def cmd_benchmark(config, from_manifest, out_dir) -> None:
    """Replication study over a scenario grid; writes results.csv + manifest."""
    if (config is None) == (from_manifest is None):
        raise DataError("pass exactly one of --config or --from-manifest")
    if from_manifest:
        result = simmod.run_benchmark_from_manifest(from_manifest, out_dir)
    else:
        doc = _load_config_file(config)
        for key in ("replications", "seed", "scenarios"):
            if key not in doc:
                raise DataError(f"{config}: missing required key {key!r}")
        valid, invalid = [], []
        for i, s in enumerate(doc["scenarios"]):
            try:
                valid.append(_dgp_config_from_dict(s))
            except DataError as exc:
                invalid.append((i, str(exc)))
        for i, message in invalid:
            click.echo(f"skipping invalid scenario {i}: {message}", err=True)
        if not valid:
            raise DataError("no valid scenarios in the configuration")
        result = simmod.run_benchmark(valid, int(doc["replications"]), int(doc["seed"]), out_dir)
    n_fail = len(result["failures"])
    click.echo(f"wrote {out_dir}/results.csv and manifest.json ({n_fail} failed replications)")


if __name__ == "__main__":
    main()
