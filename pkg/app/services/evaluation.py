"""
Metrics and analysis steps used to compare background corrections.

Everything here is a pure function of numpy arrays. Conventions:
  - MAD on the log scale uses the natural log.
  - Offsets and fold-change views use log2.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Mapping, Sequence

import numpy as np
from scipy import integrate, special, stats

from app.core.errors import DegenerateSampleError, InputError
from app.models.metrics import IrregularHistogram, OperatingCharacteristics
from app.schemas.params import NormalGammaParams, NormexpParams

logger = logging.getLogger(__name__)

PARAM_NAMES = ("mu", "sigma", "k", "theta")


def _vector(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float).ravel()
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} must be finite")
    return arr


# -----------------------------
# Fit distance
# -----------------------------
def _penalty(d: int, n_cells: int) -> float:
    """log C(n_cells - 1, d - 1) + (d - 1) + log(d)^2.5; the first term prices break placement."""
    log_choose = special.gammaln(n_cells) - special.gammaln(d) - special.gammaln(n_cells - d + 1)
    return float(log_choose) + d - 1 + math.log(d) ** 2.5


def irregular_histogram(x, n_candidates: int = 200) -> IrregularHistogram:
    """
    Penalized maximum-likelihood histogram.

    Breakpoints are chosen among the empirical quantiles at n_candidates + 1
    evenly spaced levels; a dynamic program maximizes
    sum n_i log(n_i / (n w_i)) - pen(D) over the bin count D, with
    pen(D) = log C(m - 1, D - 1) + D - 1 + log(D)^2.5 for m candidate cells.
    """
    x = np.sort(_vector(x, "histogram sample"))
    if x.size < 100:
        raise InputError(f"irregular histogram needs at least 100 values, got {x.size}")
    if np.unique(x).size < 2:
        raise DegenerateSampleError("degenerate sample: histogram needs at least 2 distinct values")

    n = x.size
    edges = np.unique(np.quantile(x, np.linspace(0.0, 1.0, n_candidates + 1)))
    counts, _ = np.histogram(x, bins=edges)
    cum = np.concatenate([[0.0], np.cumsum(counts, dtype=float)])
    m = edges.size - 1

    n_ab = cum[None, :] - cum[:, None]
    w_ab = edges[None, :] - edges[:, None]
    upper = np.triu(np.ones((m + 1, m + 1), dtype=bool), k=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        term = np.where(n_ab > 0, n_ab * np.log(n_ab / (n * w_ab)), 0.0)
    term = np.where(upper, term, -np.inf)

    best = np.full(m + 1, -np.inf)
    best[0] = 0.0
    back = np.zeros((m, m + 1), dtype=int)
    scores = np.full(m + 1, -np.inf)
    cols = np.arange(m + 1)
    for d in range(1, m + 1):
        cand = best[:, None] + term
        back[d - 1] = np.argmax(cand, axis=0)
        best = cand[back[d - 1], cols]
        scores[d] = best[m] - _penalty(d, m)

    n_bins = int(np.argmax(scores[1:])) + 1
    path = [m]
    for d in range(n_bins, 0, -1):
        path.append(int(back[d - 1][path[-1]]))
    path.reverse()

    idx = np.asarray(path)
    breaks = edges[idx]
    heights = np.diff(cum[idx]) / (n * np.diff(breaks))
    logger.debug("irregular histogram: %d bins from %d candidates", n_bins, m)
    return IrregularHistogram(breakpoints=breaks, heights=heights)


def l1_distance(f: Callable[[float], float], h: IrregularHistogram) -> float:
    """int |f - h| over the support of h, bin by bin with adaptive quadrature."""
    total = 0.0
    for lo, hi, height in zip(h.breakpoints[:-1], h.breakpoints[1:], h.heights):
        value, _ = integrate.quad(lambda t: abs(float(f(t)) - height), lo, hi, limit=200, epsabs=1e-12)
        total += value
    return total


def fit_distance_ratios(
    regular,
    densities: Mapping[str, Callable[[float], float]],
    reference: str,
) -> dict[str, float]:
    """L1 distance of each plug-in density to the histogram, over the reference's distance."""
    if reference not in densities:
        raise InputError(f"reference density {reference!r} is missing")
    h = irregular_histogram(regular)
    dist = {name: l1_distance(f, h) for name, f in densities.items()}
    ref = dist[reference]
    if ref <= 0:
        raise DegenerateSampleError("reference density matches the histogram exactly")
    return {name: d / ref for name, d in dist.items()}


# -----------------------------
# Bias / precision
# -----------------------------
def _paired(a, b, names: tuple[str, str] = ("corrected", "true")) -> tuple[np.ndarray, np.ndarray]:
    a = _vector(a, f"{names[0]} values")
    b = _vector(b, f"{names[1]} values")
    if a.shape != b.shape:
        raise InputError(f"{names[0]} ({a.size}) and {names[1]} ({b.size}) vectors differ in length")
    return a, b


def mad(corrected, truth) -> float:
    c, t = _paired(corrected, truth)
    return float(np.mean(np.abs(c - t)))


def mad_log(corrected, truth) -> float:
    c, t = _paired(corrected, truth)
    if np.any(c <= 0) or np.any(t <= 0):
        raise InputError("log-scale MAD needs strictly positive intensities")
    return float(np.mean(np.abs(np.log(c) - np.log(t))))


def excess_risk_ratio(mads, reference: float):
    if not reference > 0:
        raise InputError("reference MAD must be positive")
    if isinstance(mads, Mapping):
        return {name: float(v) / reference for name, v in mads.items()}
    return np.asarray(mads, dtype=float) / reference


def relative_l1_error(
    estimates: Sequence[NormalGammaParams | NormexpParams],
    truth: NormalGammaParams,
) -> dict[str, float]:
    """Mean |p_hat - p| / |p| per parameter; normexp alpha is compared with theta."""
    if not estimates:
        raise InputError("no estimates to compare")

    errors: dict[str, list[float]] = {}
    for est in estimates:
        if isinstance(est, NormexpParams):
            values = {"mu": est.mu, "sigma": est.sigma, "theta": est.alpha}
        else:
            values = {name: getattr(est, name) for name in PARAM_NAMES}
        for name, v in values.items():
            ref = getattr(truth, name)
            errors.setdefault(name, []).append(abs(v - ref) / abs(ref))
    return {name: float(np.mean(errs)) for name, errs in errors.items()}


def decile_means(x, y, n_bins: int = 10) -> tuple[np.ndarray, np.ndarray]:
    """Means of x and y within n_bins equal-count groups ordered by x."""
    x, y = _paired(x, y, ("x", "y"))
    order = np.argsort(x, kind="stable")
    chunks = np.array_split(order, n_bins)
    return (
        np.array([x[c].mean() for c in chunks]),
        np.array([y[c].mean() for c in chunks]),
    )


def ad_profile(corrected, truth, scale: str = "raw") -> tuple[np.ndarray, np.ndarray]:
    """
    Per-probe absolute deviation averaged over replicates sharing one truth.

    Returns (log S_j, AD_j) sorted by the true signal.
    """
    c = np.atleast_2d(np.asarray(corrected, dtype=float))
    t = _vector(truth, "true signal")
    if c.shape[1] != t.size:
        raise InputError("each replicate must align with the true signal vector")
    if np.any(t <= 0):
        raise InputError("AD profile needs a strictly positive true signal")

    if scale == "log":
        if np.any(c <= 0):
            raise InputError("log-scale AD needs strictly positive corrected intensities")
        dev = np.abs(np.log(c) - np.log(t)[None, :])
    elif scale == "raw":
        dev = np.abs(c - t[None, :])
    else:
        raise InputError(f"unknown scale {scale!r}")

    ad = dev.mean(axis=0)
    order = np.argsort(t, kind="stable")
    return np.log(t[order]), ad[order]


# -----------------------------
# Normalization and operating characteristics
# -----------------------------
def quantile_normalize(arrays) -> list[np.ndarray]:
    """
    Map every vector onto the mean order statistics. Tied entries share the
    mean reference value over their positions.
    """
    cols = [_vector(a, "array") for a in arrays]
    if not cols:
        raise InputError("nothing to normalize")
    n = cols[0].size
    if any(c.size != n for c in cols):
        raise InputError("quantile normalization needs vectors of equal length")

    reference = np.mean(np.sort(np.column_stack(cols), axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(reference)])

    out = []
    for c in cols:
        lo = stats.rankdata(c, method="min").astype(int)
        hi = stats.rankdata(c, method="max").astype(int)
        tied_mean = (cum[hi] - cum[lo - 1]) / (hi - lo + 1)
        out.append(np.where(lo == hi, reference[lo - 1], tied_mean))
    return out


def apply_offset_log(x, offset: float = 0.0) -> np.ndarray:
    if offset < 0:
        raise InputError(f"offset must be >= 0, got {offset}")
    x = np.asarray(x, dtype=float)
    shifted = x + offset
    if np.any(shifted <= 0):
        raise InputError("log2(x + offset) needs x + offset > 0 everywhere")
    return np.log2(shifted)


def operating_characteristics(log_intensities, truth, n_levels: int = 10) -> OperatingCharacteristics:
    """
    Mean log-intensity and mean replicate SD per signal level. Levels are
    equal-count groups of probes ordered by true signal; level value is the
    mean log2 true signal.
    """
    y = np.atleast_2d(np.asarray(log_intensities, dtype=float))
    t = _vector(truth, "true signal")
    if y.shape[1] != t.size:
        raise InputError("each replicate must align with the true signal vector")
    if np.any(t <= 0):
        raise InputError("operating characteristics need a strictly positive true signal")

    probe_mean = y.mean(axis=0)
    probe_sd = y.std(axis=0, ddof=1) if y.shape[0] > 1 else np.zeros(t.size)

    chunks = np.array_split(np.argsort(t, kind="stable"), n_levels)
    log_t = np.log2(t)
    return OperatingCharacteristics(
        levels=np.array([log_t[c].mean() for c in chunks]),
        means=np.array([probe_mean[c].mean() for c in chunks]),
        sds=np.array([probe_sd[c].mean() for c in chunks]),
    )


def innate_offset(corrected_zero_signal) -> float:
    x = _vector(corrected_zero_signal, "zero-signal intensities")
    if x.size == 0:
        raise InputError("innate offset needs at least one zero-signal probe")
    return float(x.mean())


def equalizing_offsets(offsets: Mapping[str, float], total: float | None = None) -> dict[str, float]:
    """Offset to add per method so that innate + added offset is the same total."""
    total = max(offsets.values()) if total is None else total
    added = {name: total - off for name, off in offsets.items()}
    short = [name for name, v in added.items() if v < 0]
    if short:
        raise InputError(f"total offset {total} is below the innate offset of {', '.join(short)}")
    return added


def slope(x, y) -> float:
    x, y = _paired(x, y, ("x", "y"))
    return float(stats.linregress(x, y).slope)


def consecutive_log_ratios(levels, means) -> np.ndarray:
    """Differences of mean log-intensity between consecutive levels."""
    levels, means = _paired(levels, means, ("level", "mean"))
    return np.diff(means[np.argsort(levels, kind="stable")])


# -----------------------------
# Ranking metrics
# -----------------------------
def auc(scores, labels) -> float:
    """Mann-Whitney U / (n1 n0) on average ranks; ties count one half."""
    s = _vector(scores, "scores")
    y = np.asarray(labels).ravel()
    if s.shape != y.shape:
        raise InputError("scores and labels differ in length")
    if not np.all(np.isin(y, (0, 1))):
        raise InputError("labels must be 0 or 1")

    pos = y == 1
    n1, n0 = int(pos.sum()), int((~pos).sum())
    if n1 == 0 or n0 == 0:
        raise InputError("AUC needs both classes")

    ranks = stats.rankdata(s)
    u = ranks[pos].sum() - n1 * (n1 + 1) / 2.0
    return float(u / (n1 * n0))


def spearman(x, y) -> float:
    x, y = _paired(x, y, ("x", "y"))
    if x.size < 3:
        raise InputError("Spearman correlation needs at least 3 pairs")
    return float(stats.spearmanr(x, y).statistic)


def welch_t(group_a, group_b) -> float:
    a = _vector(group_a, "group a")
    b = _vector(group_b, "group b")
    if a.size < 2 or b.size < 2:
        raise InputError("Welch t needs at least 2 values per group")
    return float(stats.ttest_ind(a, b, equal_var=False).statistic)


def true_de_labels(pvalues, de_fraction: float = 0.2, non_de_fraction: float = 0.4) -> np.ndarray:
    """1 for the smallest de_fraction p-values, 0 for the largest non_de_fraction, -1 otherwise."""
    p = _vector(pvalues, "p-values")
    if de_fraction + non_de_fraction > 1:
        raise InputError("DE and non-DE fractions overlap")

    order = np.argsort(p, kind="stable")
    n_de = int(math.floor(de_fraction * p.size))
    n_non = int(math.floor(non_de_fraction * p.size))
    labels = np.full(p.size, -1, dtype=int)
    labels[order[:n_de]] = 1
    if n_non:
        labels[order[-n_non:]] = 0
    return labels


def _labelled(scores: np.ndarray, labels) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(labels).ravel()
    keep = y >= 0
    return scores[keep], y[keep]


def ttest_auc(intensities, groups, labels, offset: float = 0.0) -> float:
    """AUC of |Welch t| per probe between the two replicate groups."""
    logs = apply_offset_log(np.atleast_2d(intensities), offset)
    g = np.asarray(groups).ravel()
    if g.size != logs.shape[0]:
        raise InputError("one group label per array is required")

    a, b = logs[g == 0], logs[g == 1]
    if a.shape[0] < 2 or b.shape[0] < 2:
        raise InputError("each group needs at least 2 arrays")
    with np.errstate(divide="ignore", invalid="ignore"):
        t = stats.ttest_ind(a, b, axis=0, equal_var=False).statistic
    scores = np.nan_to_num(np.abs(t), nan=0.0)
    return auc(*_labelled(scores, labels))


def spearman_auc(intensities, proportions, labels, offset: float = 0.0) -> float:
    """AUC of |Spearman rho| per probe between intensity and mixture proportion."""
    logs = apply_offset_log(np.atleast_2d(intensities), offset)
    prop = _vector(proportions, "proportions")
    if prop.size != logs.shape[0]:
        raise InputError("one proportion per array is required")

    rx = stats.rankdata(logs, axis=0)
    rp = stats.rankdata(prop)
    rx = rx - rx.mean(axis=0)
    rp = rp - rp.mean()
    denom = np.linalg.norm(rx, axis=0) * np.linalg.norm(rp)
    with np.errstate(divide="ignore", invalid="ignore"):
        rho = np.where(denom > 0, (rp @ rx) / denom, 0.0)
    return auc(*_labelled(np.abs(rho), labels))
