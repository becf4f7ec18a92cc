"""Thin wrapper around quasi-Newton maximization with analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .exceptions import ConvergenceError

GRAD_TOL = 1e-6
LOGLIK_RTOL = 1e-10
MAX_ITER = 500


@dataclass
class OptimResult:
    theta: np.ndarray
    loglik: float
    gradient_norm: float
    n_iter: int
    converged: bool
    message: str


def maximize(
    value_and_grad,
    x0,
    max_iter: int = MAX_ITER,
    gtol: float = GRAD_TOL,
    boundary_indices=(),
) -> OptimResult:
    """Maximize a smooth log-likelihood with analytic gradient via BFGS.

    ``value_and_grad(theta)`` returns (loglik, gradient); convergence means
    gradient infinity-norm below ``gtol``.  ``boundary_indices`` marks
    log-gap coordinates whose optimum may sit at -infinity (tied monotone
    coefficients); when the run stalls with such a coordinate far negative,
    it is collapsed to -30 (a likelihood change far below float noise, since
    its gradient scales as exp(coordinate)) and the run restarts.
    """
    result = _maximize_once(value_and_grad, x0, max_iter, gtol)
    for attempt in range(4):
        if result.converged:
            break
        start = result.theta.copy()
        hit = [j for j in boundary_indices if -30.0 < start[j] < -8.0]
        start[hit] = -30.0
        if attempt % 2 == 0 and (hit or attempt > 0):
            restart = _maximize_once(value_and_grad, start, max_iter, gtol)
        else:
            # quasi-Newton can zigzag indefinitely along curved near-flat
            # valleys; a trust-region pass with the differenced Hessian is
            # slower per iteration but reliable there, and the damped Newton
            # polish of the next attempt cleans up any trust-radius stall
            restart = _trust_region(value_and_grad, start, 4 * max_iter, gtol)
        restart.n_iter += result.n_iter
        result = restart
    return result


def _trust_region(value_and_grad, x0, max_iter: int, gtol: float) -> OptimResult:
    def neg_value(theta):
        ll, _ = value_and_grad(theta)
        return 1e300 if not np.isfinite(ll) else -ll

    def neg_grad(theta):
        ll, grad = value_and_grad(theta)
        return np.zeros_like(theta) if not np.isfinite(ll) else -grad

    def neg_hess(theta):
        return -gradient_hessian(value_and_grad, theta)

    res = minimize(
        neg_value,
        np.asarray(x0, dtype=float),
        jac=neg_grad,
        hess=neg_hess,
        method="trust-exact",
        options={"gtol": 0.1 * gtol, "maxiter": max_iter},
    )
    ll, grad = value_and_grad(res.x)
    gnorm = _inf_norm(grad)
    return OptimResult(
        theta=res.x,
        loglik=float(ll),
        gradient_norm=gnorm,
        n_iter=int(res.nit),
        converged=bool(np.isfinite(ll)) and gnorm < gtol,
        message=str(res.message),
    )


def _maximize_once(value_and_grad, x0, max_iter: int, gtol: float) -> OptimResult:

    def neg(theta):
        ll, grad = value_and_grad(theta)
        if not np.isfinite(ll):
            return np.inf, np.zeros_like(theta)
        return -ll, -grad

    res = minimize(
        neg,
        np.asarray(x0, dtype=float),
        jac=True,
        method="BFGS",
        options={"gtol": gtol, "maxiter": max_iter},
    )
    theta = res.x
    ll, grad = value_and_grad(theta)
    gnorm = _inf_norm(grad)
    n_iter = int(res.nit)

    # BFGS line searches can stall just above tolerance on large samples
    # (and the Hessian is near-singular when adjacent transform coefficients
    # tie); damped modified-Newton steps with a differenced Hessian and
    # clipped curvature finish the job.
    stalls = 0
    for _ in range(100):
        if not np.isfinite(ll) or gnorm < gtol:
            break
        theta_new, ll_new, grad_new = _newton_step(value_and_grad, theta, ll, grad)
        n_iter += 1
        if theta_new is None:
            break
        stalls = stalls + 1 if ll_new - ll < LOGLIK_RTOL * (1.0 + abs(ll)) else 0
        theta, ll, grad = theta_new, ll_new, grad_new
        gnorm = _inf_norm(grad)
        if stalls >= 3:
            break

    converged = bool(np.isfinite(ll)) and gnorm < gtol
    return OptimResult(
        theta=theta,
        loglik=float(ll),
        gradient_norm=gnorm,
        n_iter=n_iter,
        converged=converged,
        message=str(res.message),
    )


def _inf_norm(grad):
    return float(np.max(np.abs(grad))) if np.all(np.isfinite(grad)) else np.inf


def gradient_hessian(value_and_grad, theta, step_scale: float = 1e-6):
    """Symmetrized central-difference Hessian of the analytic gradient."""
    theta = np.asarray(theta, dtype=float)
    k = theta.shape[0]
    hess = np.empty((k, k))
    for j in range(k):
        step = step_scale * (1.0 + abs(theta[j]))
        e = np.zeros(k)
        e[j] = step
        _, g_plus = value_and_grad(theta + e)
        _, g_minus = value_and_grad(theta - e)
        hess[j] = (g_plus - g_minus) / (2.0 * step)
    return 0.5 * (hess + hess.T)


def _newton_step(value_and_grad, theta, ll, grad):
    hess = gradient_hessian(value_and_grad, theta)
    if not np.all(np.isfinite(hess)):
        return None, ll, grad
    # modified Newton: flip indefinite curvature and floor tiny eigenvalues
    # so flat directions (tied transform coefficients) cannot blow the step up
    eigvals, eigvecs = np.linalg.eigh(hess)
    scale = np.max(np.abs(eigvals))
    if scale == 0.0:
        return None, ll, grad
    curvature = np.maximum(np.abs(eigvals), 1e-8 * scale)
    direction = eigvecs @ ((eigvecs.T @ grad) / curvature)
    if not np.all(np.isfinite(direction)):
        return None, ll, grad
    scale = 1.0
    for _ in range(30):
        candidate = theta + scale * direction
        ll_new, grad_new = value_and_grad(candidate)
        if np.isfinite(ll_new) and ll_new >= ll - 1e-12 * (1.0 + abs(ll)):
            return candidate, ll_new, grad_new
        scale *= 0.5
    return None, ll, grad


def require_converged(result: OptimResult, what: str) -> OptimResult:
    if not result.converged:
        raise ConvergenceError(
            f"{what} did not converge after {result.n_iter} iterations "
            f"(gradient infinity-norm {result.gradient_norm:.3e}): {result.message}",
            gradient_norm=result.gradient_norm,
        )
    return result
