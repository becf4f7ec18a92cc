"""Shared builders for synthetic models and mixed-censoring datasets."""

from __future__ import annotations

import numpy as np
import pytest

from npbroc.bernstein import BernsteinBasis, MonotoneTransform
from npbroc.joint import Dependence, NpbModel, ObservationFrame, rho_to_lambda
from npbroc.links import get_link
from npbroc.margins import MarginalModel


#: pass/fail lines queued by the acceptance tests; flushed after the run,
#: outside pytest's output capture.
acceptance_report_lines: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if acceptance_report_lines:
        terminalreporter.section("acceptance criteria")
        for line in acceptance_report_lines:
            terminalreporter.write_line(line)


def linear_probit_margin(beta=()):
    """Margin with h(v) = v on [-6, 6], so F(v | x) = Phi(v - x'beta)."""
    basis = BernsteinBasis(order=3, lower=-6.0, upper=6.0)
    coef = -6.0 + 12.0 * np.arange(4) / 3.0
    beta = np.asarray(beta, dtype=float)
    names = tuple(f"x{i}" for i in range(beta.size))
    return MarginalModel(get_link("probit"), MonotoneTransform(basis, coef), beta, names)


def latent_normal_model(rho, beta_y=(), beta_t=()):
    """Joint model whose margins are standard normal on the identity transform."""
    return NpbModel(
        linear_probit_margin(beta_y),
        linear_probit_margin(beta_t),
        Dependence(form="constant", lambda_=rho_to_lambda(rho)),
    )


def mixed_censoring_frame(rng, n, rho=-0.5, beta_y=(), beta_t=(), fractions=(0.4, 0.2, 0.2, 0.2)):
    """Dataset mixing exact rows, right-censored times, LOD biomarkers, and
    double intervals, drawn from the latent normal model."""
    beta_y = np.asarray(beta_y, dtype=float)
    beta_t = np.asarray(beta_t, dtype=float)
    p = beta_y.size
    x = rng.uniform(size=(n, p)) if p else None
    z1 = rng.standard_normal(n)
    z2 = rho * z1 + np.sqrt(1.0 - rho * rho) * rng.standard_normal(n)
    y = z1 + (x @ beta_y if p else 0.0)
    t = z2 + (x @ beta_t if p else 0.0) + 6.0  # keep event times positive

    y_lo, y_hi = y.copy(), y.copy()
    t_lo, t_hi = t.copy(), t.copy()
    kinds = rng.choice(4, size=n, p=fractions)
    right = kinds == 1
    t_hi[right] = np.inf
    t_lo[right] = np.maximum(t[right] - np.abs(rng.standard_normal(right.sum())), 0.0)
    lod = kinds == 2
    y_hi[lod] = y[lod] + 0.3
    y_lo[lod] = -np.inf
    both = kinds == 3
    y_lo[both] = y[both] - 0.4
    y_hi[both] = y[both] + 0.4
    t_lo[both] = np.maximum(t[both] - 0.5, 0.0)
    t_hi[both] = t[both] + 0.5
    names = tuple(f"x{i}" for i in range(p))
    return ObservationFrame(y_lo, y_hi, t_lo, t_hi, x, names)


@pytest.fixture
def rng():
    return np.random.default_rng(2026)
