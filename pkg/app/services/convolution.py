"""
Normal-gamma convolution density.

Three evaluators live here:

  - build_density_grid / normgam_pdf: the production path. The density is
    tabulated on a regular lattice by inverting the characteristic function
    with one FFT, and read back through a cubic spline of the log density.
    Nodes where the FFT value is lost in round-off, and points outside the
    lattice, come from two quadrature tail evaluators instead.
  - normgam_pdf_quadrature: adaptive quadrature of the convolution integral,
    used as the reference oracle.
  - normexp_pdf: closed form for k = 1.
"""

from __future__ import annotations

import logging
import math
import threading

import numpy as np
from cachetools import LRUCache, cached
from scipy import integrate, special
from scipy.interpolate import CubicSpline

from app.core.config import get_settings
from app.core.errors import GridResolutionError, NumericalError
from app.models.density_grid import DensityGrid, GridSpec
from app.schemas.params import NormalGammaParams, NormexpParams
from app.services.distributions import gamma_logpdf, gamma_quantile

logger = logging.getLogger(__name__)

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
_CHARFN_EPS = 1e-14
_GAMMA_Q = 0.99999
_IMAG_TOL = 1e-8
_FFT_RELIABLE = 1e-6
_LAGUERRE_MIN_SCALE = 4.0
_LOG_FLOOR = math.log(1e-300)
_TAIL_NODES = 48
_WINDOW_SIGMAS = 12.0


# -----------------------------
# Characteristic function
# -----------------------------
def _charfn_parts(t, p: NormalGammaParams, shift: float = 0.0):
    """log|phi_X(t)| and arg phi_X(t), with `shift` standing in for the location mu."""
    t = np.asarray(t, dtype=float)
    log_mod = -0.5 * p.k * np.log1p((t * p.theta) ** 2) - 0.5 * (p.sigma * t) ** 2
    phase = p.k * np.arctan(t * p.theta) + shift * t
    return log_mod, phase


def normgam_charfn(t, p: NormalGammaParams):
    """phi_X(t) = (1 - i t theta)^(-k) exp(i mu t) exp(-sigma^2 t^2 / 2)."""
    log_mod, phase = _charfn_parts(t, p, shift=p.mu)
    out = np.exp(log_mod) * (np.cos(phase) + 1j * np.sin(phase))
    return out if np.ndim(out) else complex(out)


def _frequency_cutoff(p: NormalGammaParams) -> float:
    """Smallest A that certainly pushes |phi_X(A)| below 1e-14."""
    log_eps = -math.log(_CHARFN_EPS)
    a_normal = math.sqrt(2.0 * log_eps) / p.sigma

    expo = 2.0 * log_eps / p.k
    if expo > 700:
        return a_normal
    a_gamma = math.sqrt(math.expm1(expo)) / p.theta
    return min(a_normal, a_gamma)


# -----------------------------
# Tails
# -----------------------------
def _laguerre_logpdf(x, p: NormalGammaParams) -> np.ndarray:
    """
    log f(x) wherever b = 1/theta - d/sigma^2 is large against 1/sigma.

    f(x) = phi_sigma(d) (theta b)^(-k) E[exp(-T^2 / 2 sigma^2)],
    T ~ Gamma(k, rate b), d = x - mu. Exact for every b > 0; the
    expectation is a generalized Gauss-Laguerre sum.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    d = x - p.mu
    b = 1.0 / p.theta - d / p.sigma**2

    nodes, weights = special.roots_genlaguerre(_TAIL_NODES, p.k - 1.0)
    log_w = np.log(weights) - special.gammaln(p.k)
    t = nodes[None, :] / b[:, None]
    log_e = special.logsumexp(log_w[None, :] - 0.5 * (t / p.sigma) ** 2, axis=1)

    log_norm = -0.5 * (d / p.sigma) ** 2 - math.log(p.sigma) - _LOG_SQRT_2PI
    return log_norm - p.k * np.log(p.theta * b) + log_e


def _hermite_logpdf(x, p: NormalGammaParams) -> np.ndarray:
    """
    log f(x) for x well above mu: Gauss-Hermite average of the gamma density
    over the normal noise, f(x) = E_Z[f_gam(x - mu - sigma Z)].
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    nodes, weights = special.roots_hermitenorm(_TAIL_NODES)
    log_w = np.log(weights) - _LOG_SQRT_2PI

    s = (x - p.mu)[:, None] - p.sigma * nodes[None, :]
    with np.errstate(divide="ignore"):
        log_g = gamma_logpdf(s, p.signal)
    # nodes landing on the k < 1 singularity carry negligible weight; drop them
    log_g = np.where(np.isfinite(log_g), log_g, -np.inf)
    return special.logsumexp(log_w[None, :] + log_g, axis=1)


def _tail_regions(x: np.ndarray, p: NormalGammaParams) -> tuple[np.ndarray, np.ndarray]:
    """Masks of points where the Laguerre and the Hermite evaluators are accurate."""
    d = x - p.mu
    laguerre = p.sigma / p.theta - d / p.sigma >= _LAGUERRE_MIN_SCALE
    hermite = ~laguerre & (d >= get_settings().tail_sigmas * p.sigma)
    return laguerre, hermite


def _tail_logpdf(x, p: NormalGammaParams) -> np.ndarray:
    """
    log f(x) away from the bulk, unfloored. Points covered by neither
    evaluator come back as nan.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.full(x.shape, np.nan)
    laguerre, hermite = _tail_regions(x, p)
    if np.any(laguerre):
        out[laguerre] = _laguerre_logpdf(x[laguerre], p)
    if np.any(hermite):
        out[hermite] = _hermite_logpdf(x[hermite], p)
    return out


# -----------------------------
# FFT grid
# -----------------------------
def _grid_spec(p: NormalGammaParams) -> GridSpec:
    settings = get_settings()

    q = gamma_quantile(_GAMMA_Q, p.signal)
    T = p.mu + 5.0 * p.sigma + q
    left_switch = p.mu - settings.tail_sigmas * p.sigma

    step = p.sigma / settings.grid_points_per_sigma
    if T > 0:
        step = min(step, T / 2**16)

    A = max(_frequency_cutoff(p), math.pi / step)
    step = math.pi / A

    # lattice anchored on mu
    m_lo = math.ceil((p.mu - min(0.0, left_switch)) / step)
    m_hi = math.ceil((max(T, p.mu + settings.tail_sigmas * p.sigma) - p.mu) / step)
    n_nodes = m_lo + m_hi + 1

    n_points = 1 << max(12, math.ceil(math.log2(2 * n_nodes)))
    if n_points > settings.max_grid_points:
        raise GridResolutionError(
            f"grid resolution insufficient: {n_points} FFT points needed "
            f"(limit {settings.max_grid_points}) for {p.model_dump()}"
        )

    return GridSpec(
        T=T,
        lower=p.mu - m_lo * step,
        upper=p.mu + m_hi * step,
        left_switch=left_switch,
        step=step,
        A=A,
        n_points=n_points,
    )


def _build_density_grid(p: NormalGammaParams) -> DensityGrid:
    spec = _grid_spec(p)
    N, A, h = spec.n_points, spec.A, spec.step
    n_nodes = int(round((spec.upper - spec.lower) / h)) + 1

    dt = 2.0 * A / N
    t = -A + dt * np.arange(N)
    log_mod, phase = _charfn_parts(t, p, shift=p.mu - spec.lower)
    V = np.exp(log_mod) * (np.cos(phase) + 1j * np.sin(phase))

    W = np.fft.fft(V)[:n_nodes]
    W *= dt / (2.0 * math.pi)
    W[1::2] *= -1.0

    imag = float(np.max(np.abs(W.imag)))
    if imag > _IMAG_TOL:
        raise NumericalError(f"FFT density has imaginary residue {imag:.3g}")

    x = spec.lower + h * np.arange(n_nodes)
    values = np.clip(W.real, 0.0, None)

    # FFT round-off is about 1e-13 of the peak; weaker nodes come from the tails
    weak = (values < _FFT_RELIABLE * values.max()) | (x < spec.left_switch)
    laguerre, hermite = _tail_regions(x, p)
    from_tail = weak & (laguerre | hermite)

    with np.errstate(divide="ignore"):
        log_values = np.log(values)
    log_values = np.maximum(log_values, _LOG_FLOOR)
    log_values[from_tail] = _tail_logpdf(x[from_tail], p)
    if np.any(weak & ~from_tail):
        logger.debug("%d weak FFT nodes kept without a tail evaluator", int(np.sum(weak & ~from_tail)))

    values = np.exp(np.maximum(log_values, _LOG_FLOOR))
    x.setflags(write=False)
    values.setflags(write=False)

    logger.debug(
        "density grid mu=%g sigma=%g k=%g theta=%g: N=%d A=%.4g h=%.4g nodes=%d",
        p.mu, p.sigma, p.k, p.theta, N, A, h, n_nodes,
    )
    return DensityGrid(
        spec=spec,
        abscissae=x,
        values=values,
        params=p,
        log_spline=CubicSpline(x, log_values),
    )


def _quantized(p: NormalGammaParams) -> tuple[float, ...]:
    return tuple(float(f"{v:.10e}") for v in (p.mu, p.sigma, p.k, p.theta))


_grid_cache: LRUCache = LRUCache(maxsize=get_settings().grid_cache_size)


@cached(_grid_cache, key=lambda p: _quantized(p), lock=threading.Lock())
def build_density_grid(p: NormalGammaParams) -> DensityGrid:
    """FFT-tabulated density on [lower, upper] covering [0, T]; cached by quantized params."""
    return _build_density_grid(p)


# -----------------------------
# Density evaluation
# -----------------------------
def normgam_logpdf(x, grid: DensityGrid):
    """Log density, not floored, so that far-tail ratios stay meaningful."""
    x = np.asarray(x, dtype=float)
    flat = np.atleast_1d(x).ravel()
    out = np.empty_like(flat)
    spec, p = grid.spec, grid.params

    inside = (flat >= spec.lower) & (flat <= spec.upper)
    if np.any(inside):
        out[inside] = grid.log_spline(flat[inside])
    # the lattice spans mu +- tail_sigmas * sigma, so every outside point has a tail evaluator
    if not np.all(inside):
        out[~inside] = _tail_logpdf(flat[~inside], p)

    out = out.reshape(np.shape(x))
    return out if out.ndim else float(out)


def normgam_pdf(x, grid: DensityGrid):
    out = np.exp(np.maximum(normgam_logpdf(x, grid), _LOG_FLOOR))
    return out if np.ndim(out) else float(out)


# -----------------------------
# Quadrature oracle
# -----------------------------
def _quad(func, lo: float, hi: float, points: list[float]) -> float:
    pts = sorted({pt for pt in points if lo < pt < hi}) or None
    value, abserr, *_ = integrate.quad(
        func, lo, hi, points=pts, epsabs=0.0, epsrel=1e-12, limit=400, full_output=1
    )
    if abserr > 1e-8 * abs(value) and abserr > 1e-300:
        raise NumericalError(f"quadrature did not converge on [{lo}, {hi}] (estimate {value}, error {abserr})")
    return value


def normgam_pdf_quadrature(x, p: NormalGammaParams):
    """
    Reference value of f(x) = int_0^inf f_gam(t) f_norm(x - t) dt.

    For k < 1 the stretch touching t = 0 is integrated in u = t^k, which
    removes the t^(k-1) singularity.
    """
    if np.ndim(x):
        return np.array([normgam_pdf_quadrature(float(v), p) for v in np.ravel(x)]).reshape(np.shape(x))

    mu, sigma, k, theta = p.mu, p.sigma, p.k, p.theta
    d = float(x) - mu
    log_c = -k * math.log(theta) - _LOG_SQRT_2PI - math.log(sigma)

    def by_t(t: float) -> float:
        if t <= 0:
            return 0.0
        z = (d - t) / sigma
        return math.exp((k - 1.0) * math.log(t) - t / theta - math.lgamma(k) + log_c - 0.5 * z * z)

    def by_u(u: float) -> float:
        t = u ** (1.0 / k)
        z = (d - t) / sigma
        return math.exp(-t / theta - math.lgamma(k + 1.0) + log_c - 0.5 * z * z)

    lo = max(0.0, d - sigma**2 / theta - _WINDOW_SIGMAS * sigma)
    hi = d + _WINDOW_SIGMAS * sigma
    if hi <= 0:
        b = 1.0 / theta - d / sigma**2
        hi = 60.0 / b

    if lo > 0 or k >= 1:
        return _quad(by_t, lo, hi, [d, d - sigma**2 / theta])
    return _quad(by_u, 0.0, hi**k, [max(d, 0.0) ** k])


# -----------------------------
# Normal-exponential closed form
# -----------------------------
def normexp_logpdf(x, p: NormexpParams):
    x = np.asarray(x, dtype=float)
    s2a = p.sigma**2 / p.alpha
    xbar = (x - p.mu - s2a) / p.sigma
    out = -math.log(p.alpha) + 0.5 * s2a / p.alpha - (x - p.mu) / p.alpha + special.log_ndtr(xbar)
    return out if np.ndim(out) else float(out)


def normexp_pdf(x, p: NormexpParams):
    """(1/alpha) exp(sigma^2/(2 alpha^2) - (x - mu)/alpha) Phi(xbar), evaluated in log space."""
    out = np.exp(normexp_logpdf(x, p))
    return out if np.ndim(out) else float(out)
