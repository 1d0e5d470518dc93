"""
Negative-control intensities recovered from detection p-values.

P_j = #{negatives > X_j} / n_neg, so between two consecutive p-value levels
Q_k < Q_{k+1} sit exactly n_neg (Q_{k+1} - Q_k) negatives: above every
intensity of level Q_{k+1} and at or below every intensity of level Q_k.
They are placed at the midpoint of the two bands.
"""

from __future__ import annotations

import logging

import numpy as np

from app.core.errors import InputError
from app.models.detection import DetectionTable

logger = logging.getLogger(__name__)


def detection_pvalues(regular, negative) -> np.ndarray:
    x = np.asarray(regular, dtype=float).ravel()
    neg = np.sort(np.asarray(negative, dtype=float).ravel())
    if x.size == 0 or neg.size == 0:
        raise InputError("detection p-values need regular and negative intensities")
    above = neg.size - np.searchsorted(neg, x, side="right")
    return above / neg.size


def _apportion(shares: np.ndarray, total: int) -> np.ndarray:
    """Round shares to integers summing to total (largest remainders get the +-1)."""
    counts = np.round(shares).astype(int)
    diff = total - int(counts.sum())
    if diff == 0:
        return counts

    logger.warning("inferred count %d != n_neg %d after rounding; redistributing", counts.sum(), total)
    remainder = shares - counts
    if diff > 0:
        idx = np.argsort(-remainder, kind="stable")[:diff]
        counts[idx] += 1
    else:
        order = np.argsort(remainder, kind="stable")
        idx = [i for i in order if counts[i] > 0][: -diff]
        counts[idx] -= 1
    return counts


def infer_negatives(table: DetectionTable) -> np.ndarray:
    x, p, n = table.regular, table.pvalues, table.n_neg

    order = np.argsort(x, kind="stable")
    if np.any(np.diff(p[order]) > 0):
        raise InputError("detection p-values must not increase with intensity")

    levels = np.unique(p)
    lo_x, hi_x = float(x.min()), float(x.max())

    # band edges per level: lowest and highest intensity carrying that p-value
    band_min = np.array([x[p == q].min() for q in levels])
    band_max = np.array([x[p == q].max() for q in levels])

    shares = np.concatenate(
        [
            [n * levels[0]],
            n * np.diff(levels),
            [n * (1.0 - levels[-1])],
        ]
    )
    counts = _apportion(shares, n)

    spacing = (hi_x - lo_x) / x.size if hi_x > lo_x else max(abs(hi_x), 1.0) * 1e-6
    top = hi_x + spacing
    mids = 0.5 * (band_max[1:] + band_min[:-1])
    values = np.concatenate([[top], mids, [lo_x]])

    out = np.sort(np.repeat(values, counts))
    logger.info("inferred %d negatives from %d levels", out.size, levels.size)
    return out
