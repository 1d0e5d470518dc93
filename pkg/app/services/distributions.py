"""
Elementary densities, quantiles, samplers and the robust normal fit.

All functions are vectorized over x and pure; samplers take an explicit
numpy Generator.
"""

from __future__ import annotations

import logging

import numpy as np
from scipy import special, stats

from app.core.errors import DegenerateSampleError, InputError, NumericalError
from app.schemas.params import GammaParams, MixtureNoiseSpec, NormalParams

logger = logging.getLogger(__name__)

# median(|Z|) for Z ~ N(0, 1)
MAD_TO_SIGMA = 0.6745


# -----------------------------
# Normal
# -----------------------------
def normal_pdf(x, p: NormalParams):
    return stats.norm.pdf(x, loc=p.mu, scale=p.sigma)


def normal_logpdf(x, p: NormalParams):
    return stats.norm.logpdf(x, loc=p.mu, scale=p.sigma)


def normal_cdf(x, p: NormalParams):
    return stats.norm.cdf(x, loc=p.mu, scale=p.sigma)


# -----------------------------
# Gamma
# -----------------------------
def gamma_pdf(x, g: GammaParams):
    """
    x^(k-1) exp(-x/theta) / (theta^k Gamma(k)); 0 for x < 0.
    For k < 1 the value at x = 0 is +inf (never placed on a grid).
    """
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        out = np.exp(gamma_logpdf(x, g))
    return out if out.ndim else float(out)


def gamma_logpdf(x, g: GammaParams):
    x = np.asarray(x, dtype=float)
    out = np.full(x.shape, -np.inf)
    pos = x > 0
    xp = x[pos]
    out[pos] = (g.k - 1.0) * np.log(xp) - xp / g.theta - g.k * np.log(g.theta) - special.gammaln(g.k)

    zero = x == 0
    if np.any(zero):
        if g.k < 1:
            out[zero] = np.inf
        elif g.k == 1:
            out[zero] = -np.log(g.theta)
    return out if out.ndim else float(out)


def gamma_cdf(x, g: GammaParams):
    x = np.asarray(x, dtype=float)
    out = special.gammainc(g.k, np.clip(x, 0.0, None) / g.theta)
    return out if out.ndim else float(out)


def gamma_quantile(q: float, g: GammaParams) -> float:
    if not 0.0 < q < 1.0:
        raise InputError(f"quantile level must lie in (0, 1), got {q}")

    value = float(special.gammaincinv(g.k, q)) * g.theta
    if not np.isfinite(value):
        raise NumericalError(f"gamma quantile did not converge (q={q}, k={g.k}, theta={g.theta})")
    return value


# -----------------------------
# Samplers
# -----------------------------
def sample_normal(n: int, p: NormalParams, rng: np.random.Generator) -> np.ndarray:
    return rng.normal(p.mu, p.sigma, size=int(n))


def sample_gamma(n: int, g: GammaParams, rng: np.random.Generator) -> np.ndarray:
    return rng.gamma(g.k, g.theta, size=int(n))


def sample_noncentral_chisq(n: int, df: int, ncp: float, rng: np.random.Generator) -> np.ndarray:
    # chi2(df - 1) + (Z + sqrt(ncp))^2
    n = int(n)
    shifted = (rng.standard_normal(n) + np.sqrt(ncp)) ** 2
    if df > 1:
        return rng.chisquare(df - 1, size=n) + shifted
    return shifted


def sample_mixture_noise(n: int, spec: MixtureNoiseSpec, rng: np.random.Generator) -> np.ndarray:
    """
    (1-p) N(mu, sigma) + p chi2(df, ncp).

    The normal draws always come first; with p == 0 nothing else is drawn, so
    the stream matches plain sample_normal exactly.
    """
    out = sample_normal(n, spec.normal, rng)
    if spec.p == 0:
        return out

    swap = rng.random(int(n)) < spec.p
    out[swap] = sample_noncentral_chisq(int(swap.sum()), spec.chisq_df, spec.chisq_ncp, rng)
    return out


def mixture_noise_mean(spec: MixtureNoiseSpec) -> float:
    return (1.0 - spec.p) * spec.normal.mu + spec.p * (spec.chisq_df + spec.chisq_ncp)


# -----------------------------
# Robust fit of the negative controls
# -----------------------------
def robust_normal_fit(neg) -> NormalParams:
    """mu = median, sigma = median(|X - mu|) / 0.6745."""
    x = np.asarray(neg, dtype=float).ravel()
    if np.unique(x).size < 2:
        raise DegenerateSampleError("degenerate sample: need at least 2 distinct values")

    mu = float(np.median(x))
    mad = float(np.median(np.abs(x - mu)))
    if mad == 0:
        raise DegenerateSampleError("degenerate sample: zero median absolute deviation")
    return NormalParams(mu=mu, sigma=mad / MAD_TO_SIGMA)
