"""
Background-correction operators.

Every model-based correction is a conditional expectation E[S | X = x]:

  NG_TRUE / NG_MLE     k theta f_{k+1}(x) / f_k(x) on two density grids
  NEXP_*               sigma (xbar + phi(xbar)/Phi(xbar)) in closed form
  SUBTRACT             max(x - median(neg), 0)
"""

from __future__ import annotations

import logging
import math
from typing import Callable

import numpy as np
from scipy import integrate, special

from app.core.errors import InputError, NumericalError
from app.models.density_grid import DensityGrid
from app.schemas.params import (
    NEXP_TAGS,
    NG_TAGS,
    CorrectionMethod,
    CorrectionTag,
    NormalGammaParams,
    NormexpParams,
)
from app.services.convolution import build_density_grid, normgam_logpdf

logger = logging.getLogger(__name__)

_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)
_MILLS_SWITCH = -30.0


def _as_output(out: np.ndarray):
    return out if out.ndim else float(out)


# -----------------------------
# Normal-gamma
# -----------------------------
def _same_params(a: NormalGammaParams, b: NormalGammaParams) -> bool:
    return bool(np.allclose([a.mu, a.sigma, a.k, a.theta], [b.mu, b.sigma, b.k, b.theta], rtol=1e-9, atol=0.0))


def correction_grids(p: NormalGammaParams) -> tuple[DensityGrid, DensityGrid]:
    return build_density_grid(p), build_density_grid(p.shape_shifted(1.0))


def correct_normgam(x, p: NormalGammaParams, grids: tuple[DensityGrid, DensityGrid] | None = None):
    """S = k theta f_{k+1}(x) / f_k(x), evaluated as a difference of log densities."""
    base, shifted = grids or correction_grids(p)
    if not (_same_params(base.params, p) and _same_params(shifted.params, p.shape_shifted(1.0))):
        raise InputError("correction grids were built for different parameters")

    x = np.asarray(x, dtype=float)
    log_ratio = normgam_logpdf(x, shifted) - normgam_logpdf(x, base)
    out = p.k * p.theta * np.exp(np.asarray(log_ratio))
    return _as_output(np.maximum(out, np.finfo(float).tiny))


# -----------------------------
# Normal-exponential
# -----------------------------
def _shifted_mills(xbar: np.ndarray) -> np.ndarray:
    """xbar + phi(xbar)/Phi(xbar)."""
    out = np.empty_like(xbar)
    far = xbar < _MILLS_SWITCH

    near = ~far
    out[near] = xbar[near] + _SQRT_2_OVER_PI / special.erfcx(-xbar[near] / math.sqrt(2.0))

    z = -xbar[far]
    z2 = z * z
    out[far] = (1.0 / z) * (1.0 - 2.0 / z2 + 10.0 / z2**2 - 74.0 / z2**3)
    return out


def correct_normexp(x, p: NormexpParams):
    x = np.asarray(x, dtype=float)
    xbar = np.atleast_1d((x - p.mu - p.sigma**2 / p.alpha) / p.sigma)
    out = p.sigma * _shifted_mills(xbar)
    return _as_output(np.maximum(out, np.finfo(float).tiny).reshape(x.shape))


# -----------------------------
# Subtraction
# -----------------------------
def correct_subtract(x, neg=None, *, median: float | None = None):
    if median is None:
        neg = np.asarray(neg if neg is not None else [], dtype=float)
        if neg.size == 0:
            raise InputError("subtraction needs at least one negative probe")
        median = float(np.median(neg))
    out = np.maximum(np.asarray(x, dtype=float) - median, 0.0)
    return _as_output(out)


# -----------------------------
# Batch API
# -----------------------------
def make_method(tag: CorrectionTag | str, *, params=None, negative=None) -> CorrectionMethod:
    tag = CorrectionTag(tag)
    if tag in NG_TAGS:
        if isinstance(params, NormexpParams):
            params = params.as_normal_gamma()
        return CorrectionMethod(tag=tag, normal_gamma=params)
    if tag in NEXP_TAGS:
        return CorrectionMethod(tag=tag, normexp=params)

    neg = np.asarray(negative if negative is not None else [], dtype=float)
    if neg.size == 0:
        raise InputError("subtraction needs at least one negative probe")
    return CorrectionMethod(tag=tag, negative_median=float(np.median(neg)))


def correct(x, method: CorrectionMethod) -> np.ndarray:
    """Correct a whole vector with one method; NG methods build one pair of grids."""
    x = np.asarray(x, dtype=float)
    if method.tag in NG_TAGS:
        out = correct_normgam(x, method.normal_gamma)
    elif method.tag in NEXP_TAGS:
        out = correct_normexp(x, method.normexp)
    else:
        out = correct_subtract(x, median=method.negative_median)
    return np.asarray(out, dtype=float)


# -----------------------------
# Quadrature oracle
# -----------------------------
def _piecewise_quad(func: Callable[[float], float], edges: list[float], upper: float) -> float:
    total, error = 0.0, 0.0
    for lo, hi in zip(edges, edges[1:] + [upper]):
        if hi <= lo:
            continue
        value, abserr = integrate.quad(func, lo, hi, epsabs=0.0, epsrel=1e-10, limit=400)
        total += value
        error += abserr
    if error > 1e-6 * abs(total) and error > 1e-280:
        raise NumericalError(f"oracle quadrature did not converge (value {total}, error {error})")
    return total


def conditional_expectation_oracle(
    x: float,
    signal_pdf: Callable[[float], float],
    noise_pdf: Callable[[float], float],
    *,
    lower: float = 0.0,
    upper: float = math.inf,
    points: tuple[float, ...] = (),
) -> float:
    """
    E[S | X = x] = int s f_S(s) f_B(x - s) ds / int f_S(s) f_B(x - s) ds.

    `points` split the signal axis where the integrand concentrates; the last
    piece runs to `upper`.
    """
    edges = sorted({lower, *(pt for pt in points if lower < pt < upper)})

    den = _piecewise_quad(lambda s: signal_pdf(s) * noise_pdf(x - s), edges, upper)
    if den <= 0 or not math.isfinite(den):
        raise NumericalError(f"vanishing denominator in conditional expectation at x={x}")
    num = _piecewise_quad(lambda s: s * signal_pdf(s) * noise_pdf(x - s), edges, upper)
    return num / den


def normgam_conditional_expectation(x: float, p: NormalGammaParams) -> float:
    """Oracle value of the normal-gamma correction at a single x."""
    log_c = -p.k * math.log(p.theta) - math.lgamma(p.k)

    def signal_pdf(s: float) -> float:
        if s <= 0:
            return 0.0
        return math.exp((p.k - 1.0) * math.log(s) - s / p.theta + log_c)

    d = float(x) - p.mu
    # noise rescaled to peak at 1 over s >= 0; the constant cancels in the ratio
    z_peak = min(d, 0.0) / p.sigma

    def noise_pdf(b: float) -> float:
        z = (b - p.mu) / p.sigma
        return math.exp(-0.5 * (z - z_peak) * (z + z_peak))

    shift = p.sigma**2 / p.theta
    points = [d - shift - 12.0 * p.sigma, d - shift, d, d + 12.0 * p.sigma, 12.0 * p.sigma]
    rate = 1.0 / p.theta - d / p.sigma**2
    if rate > 0:
        points += [1.0 / rate, 10.0 / rate, 50.0 / rate]
    return conditional_expectation_oracle(float(x), signal_pdf, noise_pdf, points=tuple(points))
