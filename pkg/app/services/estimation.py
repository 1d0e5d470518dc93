"""
Parameter estimation from one array.

normgam_mle / normexp_mle maximize the joint likelihood of regular probes
(convolution density) and negative probes (normal density) with a restarted
Nelder-Mead simplex. Both work in standardized, positive-unconstrained
coordinates:

  normal-gamma: ((mu - mu0)/s0, log(sigma/s0), log(k theta/s0), log(theta sqrt(k)/s0))
  normexp:      ((mu - mu0)/s0, log(sigma/s0), log(alpha/s0))

where (mu0, s0) come from the initialization. kθ and θ√k are both in
intensity units, so the simplex sees homogeneous coordinates.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import optimize, signal

from app.core.config import get_settings
from app.core.errors import DegenerateSampleError, GridResolutionError, InputError, NumericalError
from app.models.probe_array import FitResult, ProbeArray
from app.schemas.params import NormalGammaParams, NormalParams, NormexpParams
from app.services.convolution import build_density_grid, normexp_logpdf, normgam_logpdf
from app.services.distributions import normal_logpdf

logger = logging.getLogger(__name__)

_LOG_FLOOR = math.log(1e-300)
_IQR_TO_SIGMA = 1.349
_SIMPLEX_STEP = 0.1
_KDE_POINTS = 2**14


# -----------------------------
# Log-likelihoods
# -----------------------------
def _negative_loglik(mu: float, sigma: float, neg: np.ndarray) -> float:
    if neg.size == 0:
        return 0.0
    ll = normal_logpdf(neg, NormalParams(mu=mu, sigma=sigma))
    return float(np.maximum(ll, _LOG_FLOOR).sum())


def loglik_normgam(p: NormalGammaParams, arr: ProbeArray) -> float:
    total = _negative_loglik(p.mu, p.sigma, arr.negative)
    if arr.n_reg:
        grid = build_density_grid(p)
        total += float(np.maximum(normgam_logpdf(arr.regular, grid), _LOG_FLOOR).sum())
    return total


def loglik_normexp(p: NormexpParams, arr: ProbeArray) -> float:
    total = _negative_loglik(p.mu, p.sigma, arr.negative)
    if arr.n_reg:
        total += float(np.maximum(normexp_logpdf(arr.regular, p), _LOG_FLOOR).sum())
    return total


# -----------------------------
# Initialization
# -----------------------------
@dataclass(frozen=True)
class _Start:
    params: NormalGammaParams
    fallback: bool
    notes: tuple[str, ...]


def _normgam_start(arr: ProbeArray) -> _Start:
    neg, reg = arr.negative, arr.regular
    if neg.size < 2:
        raise InputError("normal-gamma initialization needs at least 2 negative probes")
    if reg.size < 2:
        raise InputError("normal-gamma initialization needs at least 2 regular probes")

    notes: list[str] = []
    mu0 = float(np.mean(neg))

    q75, q25 = np.percentile(neg, [75, 25])
    sigma0 = float(q75 - q25) / _IQR_TO_SIGMA
    if sigma0 <= 0:
        sigma0 = float(np.std(neg, ddof=1))
        notes.append("IQR of negatives is 0; sigma0 = sd(neg)")
    if sigma0 <= 0:
        raise DegenerateSampleError("degenerate sample: negative probes are constant")

    excess = float(np.mean(reg)) - mu0
    var_reg = float(np.var(reg, ddof=1))

    if excess <= 0:
        theta0, k0 = sigma0, 1.0
        notes.append("mean(reg) <= mean(neg); theta0 = sigma0, k0 = 1")
    elif var_reg <= sigma0**2:
        theta0, k0 = excess, 1.0
        notes.append("sd(reg)^2 <= sigma0^2; theta0 = mean(reg) - mu0, k0 = 1")
    else:
        theta0 = (var_reg - sigma0**2) / excess
        k0 = excess / theta0

    for note in notes:
        logger.warning("normgam_init fallback: %s", note)

    return _Start(
        params=NormalGammaParams(mu=mu0, sigma=sigma0, k=k0, theta=theta0),
        fallback=bool(notes),
        notes=tuple(notes),
    )


def normgam_init(arr: ProbeArray) -> NormalGammaParams:
    """Moment-based starting point; see _normgam_start for the fallbacks."""
    return _normgam_start(arr).params


# -----------------------------
# Simplex driver
# -----------------------------
@dataclass(frozen=True)
class _SimplexResult:
    z: np.ndarray
    value: float
    iterations: int
    converged: bool


def _nelder_mead(objective: Callable[[np.ndarray], float], z0: np.ndarray) -> _SimplexResult:
    settings = get_settings()
    z = np.asarray(z0, dtype=float)
    f = objective(z)
    if not np.isfinite(f):
        raise NumericalError("log-likelihood is not finite at the starting point")

    total_iter = 0
    converged = False
    for run in range(settings.optimizer_restarts + 1):
        fatol = settings.optimizer_rel_tol * max(abs(f), 1.0)
        simplex = np.vstack([z, z + _SIMPLEX_STEP * np.eye(z.size)])
        res = optimize.minimize(
            objective,
            z,
            method="Nelder-Mead",
            options={
                "initial_simplex": simplex,
                "maxiter": settings.optimizer_max_iter,
                "maxfev": 4 * settings.optimizer_max_iter,
                "xatol": 1e-7,
                "fatol": fatol,
            },
        )
        total_iter += int(res.nit)
        improvement = f - float(res.fun)
        if float(res.fun) <= f:
            z, f = np.asarray(res.x, dtype=float), float(res.fun)
        converged = bool(res.success)

        logger.info("simplex run %d: -loglik=%.10g nit=%d success=%s", run + 1, f, res.nit, res.success)
        if converged and improvement <= fatol:
            break

    if not converged:
        logger.warning("simplex did not converge after %d iterations", total_iter)
    return _SimplexResult(z=z, value=f, iterations=total_iter, converged=converged)


def _guard(func: Callable[[np.ndarray], float]) -> Callable[[np.ndarray], float]:
    """Unreachable parameter regions count as -inf log-likelihood."""

    def wrapped(z: np.ndarray) -> float:
        if not np.all(np.isfinite(z)) or np.any(np.abs(z[1:]) > 50):
            return math.inf
        try:
            value = func(z)
        except (GridResolutionError, NumericalError, ValueError, OverflowError):
            return math.inf
        return value if np.isfinite(value) else math.inf

    return wrapped


# -----------------------------
# Normal-gamma MLE
# -----------------------------
def _normgam_to_z(p: NormalGammaParams, mu0: float, s0: float) -> np.ndarray:
    p3 = p.k * p.theta
    p4 = p.theta * math.sqrt(p.k)
    return np.array([(p.mu - mu0) / s0, math.log(p.sigma / s0), math.log(p3 / s0), math.log(p4 / s0)])


def _normgam_from_z(z: np.ndarray, mu0: float, s0: float) -> NormalGammaParams:
    p3 = s0 * math.exp(z[2])
    p4 = s0 * math.exp(z[3])
    return NormalGammaParams(
        mu=mu0 + s0 * z[0],
        sigma=s0 * math.exp(z[1]),
        k=(p3 / p4) ** 2,
        theta=p4**2 / p3,
    )


def normgam_mle(arr: ProbeArray, start: NormalGammaParams | None = None) -> FitResult:
    arr.require_sizes()
    init = _normgam_start(arr)
    p0 = start or init.params
    mu0, s0 = init.params.mu, init.params.sigma

    objective = _guard(lambda z: -loglik_normgam(_normgam_from_z(z, mu0, s0), arr))
    res = _nelder_mead(objective, _normgam_to_z(p0, mu0, s0))
    params = _normgam_from_z(res.z, mu0, s0)

    logger.info(
        "normgam fit: mu=%.6g sigma=%.6g k=%.6g theta=%.6g loglik=%.10g",
        params.mu, params.sigma, params.k, params.theta, -res.value,
    )
    return FitResult(
        params=params,
        loglik=-res.value,
        iterations=res.iterations,
        converged=res.converged,
        init_fallback=init.fallback and start is None,
        notes=init.notes if start is None else (),
    )


# -----------------------------
# Normexp estimators
# -----------------------------
def normexp_np(arr: ProbeArray) -> NormexpParams:
    """Moments: mu = mean(neg), sigma = sd(neg), alpha = mean(reg) - mu."""
    if arr.n_neg < 2 or arr.n_reg < 1:
        raise InputError("moment estimator needs at least 2 negative and 1 regular probe")

    mu = float(np.mean(arr.negative))
    sigma = float(np.std(arr.negative, ddof=1))
    alpha = float(np.mean(arr.regular)) - mu
    if alpha <= 0:
        raise DegenerateSampleError("signal mean below noise mean")
    if sigma <= 0:
        raise DegenerateSampleError("degenerate sample: negative probes are constant")
    return NormexpParams(mu=mu, sigma=sigma, alpha=alpha)


def _normexp_to_z(p: NormexpParams, mu0: float, s0: float) -> np.ndarray:
    return np.array([(p.mu - mu0) / s0, math.log(p.sigma / s0), math.log(p.alpha / s0)])


def _normexp_from_z(z: np.ndarray, mu0: float, s0: float) -> NormexpParams:
    return NormexpParams(mu=mu0 + s0 * z[0], sigma=s0 * math.exp(z[1]), alpha=s0 * math.exp(z[2]))


def normexp_mle(arr: ProbeArray, start: NormexpParams | None = None) -> FitResult:
    arr.require_sizes()
    notes: tuple[str, ...] = ()
    try:
        p0 = normexp_np(arr)
    except DegenerateSampleError:
        base = _normgam_start(arr).params
        p0 = NormexpParams(mu=base.mu, sigma=base.sigma, alpha=base.sigma)
        notes = ("moment start unavailable; alpha0 = sigma0",)
        logger.warning("normexp_mle fallback: %s", notes[0])

    mu0, s0 = p0.mu, p0.sigma
    objective = _guard(lambda z: -loglik_normexp(_normexp_from_z(z, mu0, s0), arr))
    res = _nelder_mead(objective, _normexp_to_z(start or p0, mu0, s0))
    params = _normexp_from_z(res.z, mu0, s0)

    logger.info(
        "normexp fit: mu=%.6g sigma=%.6g alpha=%.6g loglik=%.10g",
        params.mu, params.sigma, params.alpha, -res.value,
    )
    return FitResult(
        params=params,
        loglik=-res.value,
        iterations=res.iterations,
        converged=res.converged,
        init_fallback=bool(notes),
        notes=notes,
    )


# -----------------------------
# RMA
# -----------------------------
def _bw_silverman(x: np.ndarray) -> float:
    q75, q25 = np.percentile(x, [75, 25])
    a = min(float(np.std(x, ddof=1)), float(q75 - q25) / 1.34)
    if a <= 0:
        a = float(np.std(x, ddof=1))
    return 0.9 * a * x.size ** (-0.2)


def kde_mode(x) -> float:
    """
    Mode of an Epanechnikov kernel density (bandwidth = kernel sd, Silverman's
    rule), binned on 2^14 points and smoothed with one FFT convolution.
    """
    x = np.asarray(x, dtype=float).ravel()
    if x.size < 2 or np.ptp(x) == 0:
        raise DegenerateSampleError("degenerate sample: density mode needs at least 2 distinct values")

    bw = _bw_silverman(x)
    half = math.sqrt(5.0) * bw
    counts, edges = np.histogram(x, bins=_KDE_POINTS, range=(x.min() - half, x.max() + half))
    centers = 0.5 * (edges[:-1] + edges[1:])
    step = edges[1] - edges[0]

    m = int(half // step)
    u = step * np.arange(-m, m + 1)
    kernel = np.clip(1.0 - u**2 / (5.0 * bw**2), 0.0, None)
    density = signal.fftconvolve(counts.astype(float), kernel, mode="same")
    return float(centers[int(np.argmax(density))])


def normexp_rma(reg) -> NormexpParams:
    """
    Affymetrix-style background estimates from regular probes only:

      mu    = density mode of the points below the first density mode
      sigma = RMS of (x - mu) over x < mu (n - 1 denominator)
      alpha = density mode of (x - mu) over x > mu
    """
    x = np.asarray(reg, dtype=float).ravel()
    if x.size < 100:
        raise InputError(f"RMA needs at least 100 regular probes, got {x.size}")

    mu = kde_mode(x)
    mu = kde_mode(x[x < mu]) if np.count_nonzero(x < mu) >= 2 else mu

    below = x[x < mu] - mu
    above = x[x > mu] - mu
    if below.size < 2 or above.size < 2:
        raise DegenerateSampleError("no points on one side of the density mode")

    sigma = math.sqrt(float(np.sum(below**2)) / (below.size - 1))
    alpha = kde_mode(above)
    if alpha <= 0:
        alpha = float(above.min())
    return NormexpParams(mu=mu, sigma=sigma, alpha=alpha)
