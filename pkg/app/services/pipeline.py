"""
Batch evaluation: fit, correct and score every replicate of a simulated
batch, then aggregate into one long-format report plus plotting profiles.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from app.core.config import get_settings
from app.core.errors import InputError, NormgamError
from app.models.batch import SimulatedBatch
from app.models.probe_array import FitResult, ProbeArray
from app.schemas.params import CorrectionTag, NormalGammaParams, NormexpParams
from app.schemas.report import EvalReport
from app.services.convolution import build_density_grid, normexp_pdf, normgam_pdf
from app.services.correction import correct, make_method
from app.services.estimation import normexp_mle, normexp_np, normexp_rma, normgam_mle
from app.services.evaluation import (
    ad_profile,
    apply_offset_log,
    consecutive_log_ratios,
    decile_means,
    equalizing_offsets,
    excess_risk_ratio,
    fit_distance_ratios,
    innate_offset,
    mad,
    mad_log,
    operating_characteristics,
    quantile_normalize,
    relative_l1_error,
    slope,
    spearman_auc,
    ttest_auc,
)

logger = logging.getLogger(__name__)

ALL_METHODS: tuple[CorrectionTag, ...] = tuple(CorrectionTag)
REFERENCE = CorrectionTag.NG_TRUE
FITTED = (CorrectionTag.NG_MLE, CorrectionTag.NEXP_MLE, CorrectionTag.NEXP_RMA, CorrectionTag.NEXP_NP)

# fraction of probes standing in for zero-concentration spikes
ZERO_SIGNAL_QUANTILE = 0.01

Params = NormalGammaParams | NormexpParams
ProfileRow = tuple[float, str, float]


@dataclass
class ReplicateResult:
    params: dict[CorrectionTag, Params] = field(default_factory=dict)
    regular: dict[CorrectionTag, np.ndarray] = field(default_factory=dict)
    negative: dict[CorrectionTag, np.ndarray] = field(default_factory=dict)
    not_converged: list[CorrectionTag] = field(default_factory=list)


@dataclass
class BatchEvaluation:
    report: EvalReport
    profiles: dict[str, list[ProfileRow]]
    not_converged: int = 0


# -----------------------------
# Per replicate
# -----------------------------
def fit_methods(arr: ProbeArray, methods: Sequence[CorrectionTag]) -> tuple[dict[CorrectionTag, Params], list[CorrectionTag]]:
    """Estimate the parameters each requested model-based method needs."""
    params: dict[CorrectionTag, Params] = {}
    not_converged: list[CorrectionTag] = []

    def keep(tag: CorrectionTag, fit: FitResult) -> None:
        params[tag] = fit.params
        if not fit.converged:
            not_converged.append(tag)

    nexp_np = normexp_np(arr) if CorrectionTag.NEXP_NP in methods or CorrectionTag.NEXP_MLE in methods else None
    if CorrectionTag.NEXP_NP in methods:
        params[CorrectionTag.NEXP_NP] = nexp_np
    if CorrectionTag.NEXP_MLE in methods:
        keep(CorrectionTag.NEXP_MLE, normexp_mle(arr, start=nexp_np))
    if CorrectionTag.NEXP_RMA in methods:
        params[CorrectionTag.NEXP_RMA] = normexp_rma(arr.regular)
    if CorrectionTag.NG_MLE in methods:
        keep(CorrectionTag.NG_MLE, normgam_mle(arr))
    return params, not_converged


def evaluate_replicate(arr: ProbeArray, truth: NormalGammaParams, methods: Sequence[CorrectionTag]) -> ReplicateResult:
    params, not_converged = fit_methods(arr, methods)
    if REFERENCE in methods:
        params[REFERENCE] = truth

    out = ReplicateResult(params=params, not_converged=not_converged)
    for tag in methods:
        method = make_method(tag, params=params.get(tag), negative=arr.negative)
        out.regular[tag] = correct(arr.regular, method)
        out.negative[tag] = correct(arr.negative, method)
    return out


# -----------------------------
# Report sections
# -----------------------------
def _accuracy_rows(
    report: EvalReport,
    batch: SimulatedBatch,
    results: list[ReplicateResult],
    methods: Sequence[CorrectionTag],
) -> None:
    dataset = batch.label
    signals = [batch.signal_for(i) for i in range(batch.n_arrays)]

    raw = {tag: float(np.mean([mad(r.regular[tag], s) for r, s in zip(results, signals)])) for tag in methods}
    for tag, value in raw.items():
        report.add("mad", tag, dataset, value, "raw")

    log_ok = all(np.all(s > 0) for s in signals)
    log_methods = [tag for tag in methods if tag != CorrectionTag.SUBTRACT]
    logs: dict[CorrectionTag, float] = {}
    if log_ok:
        logs = {
            tag: float(np.mean([mad_log(r.regular[tag], s) for r, s in zip(results, signals)]))
            for tag in log_methods
        }
        for tag, value in logs.items():
            report.add("mad", tag, dataset, value, "log")
    else:
        logger.warning("true signal has zeros; skipping log-scale MAD")

    if REFERENCE not in methods:
        logger.info("%s not evaluated; no excess-risk rows", REFERENCE)
        return
    for tag, ratio in excess_risk_ratio(raw, raw[REFERENCE]).items():
        report.add("excess_risk", tag, dataset, ratio, "raw")
    if logs:
        for tag, ratio in excess_risk_ratio(logs, logs[REFERENCE]).items():
            report.add("excess_risk", tag, dataset, ratio, "log")


def _parameter_rows(report: EvalReport, batch: SimulatedBatch, results: list[ReplicateResult]) -> None:
    for tag in FITTED:
        estimates = [r.params[tag] for r in results if tag in r.params]
        if not estimates:
            continue
        for name, value in relative_l1_error(estimates, batch.truth).items():
            report.add(f"rel_error_{name}", tag, batch.label, value)


def _fit_distance_rows(report: EvalReport, batch: SimulatedBatch, first: ReplicateResult) -> None:
    """Plug-in density distances to the irregular histogram of the first array."""
    if CorrectionTag.NG_MLE not in first.params:
        return

    densities = {}
    for tag in FITTED:
        p = first.params.get(tag)
        if isinstance(p, NormalGammaParams):
            grid = build_density_grid(p)
            densities[tag.value] = lambda t, g=grid: normgam_pdf(t, g)
        elif isinstance(p, NormexpParams):
            densities[tag.value] = lambda t, q=p: normexp_pdf(t, q)

    ratios = fit_distance_ratios(batch.arrays[0].regular, densities, CorrectionTag.NG_MLE.value)
    for name, value in ratios.items():
        report.add("fit_distance_ratio", name, batch.label, value)


def _normalized(results: list[ReplicateResult], tag: CorrectionTag, n_reg: int) -> np.ndarray:
    """Quantile-normalize corrected regular + negative probes across replicates; keep the regular part."""
    stacked = [np.concatenate([r.regular[tag], r.negative[tag]]) for r in results]
    return np.vstack([col[:n_reg] for col in quantile_normalize(stacked)])


def _shared_signal_rows(
    report: EvalReport,
    profiles: dict[str, list[ProfileRow]],
    batch: SimulatedBatch,
    results: list[ReplicateResult],
    methods: Sequence[CorrectionTag],
) -> None:
    truth = batch.signals[0]
    dataset = batch.label
    n_reg = truth.size

    for scale in ("raw", "log"):
        for tag in methods:
            if scale == "log" and tag == CorrectionTag.SUBTRACT:
                continue
            try:
                log_s, ad = ad_profile(np.vstack([r.regular[tag] for r in results]), truth, scale)
            except InputError as e:
                logger.warning("no %s AD profile for %s: %s", scale, tag, e)
                continue
            profiles.setdefault(f"ad_{scale}", []).extend((x, tag.value, y) for x, y in zip(log_s, ad))
            lowest = decile_means(log_s, ad)[1][0]
            report.add("ad_lowest_decile", tag, dataset, lowest, scale)

    oc_methods = [tag for tag in methods if tag != CorrectionTag.SUBTRACT]
    if not oc_methods:
        return

    zero = truth <= np.quantile(truth, ZERO_SIGNAL_QUANTILE)
    normalized = {tag: _normalized(results, tag, n_reg) for tag in oc_methods}
    offsets = {tag: innate_offset(normalized[tag][:, zero]) for tag in oc_methods}
    added = equalizing_offsets(offsets)

    for tag in oc_methods:
        report.add("innate_offset", tag, dataset, offsets[tag])
        oc = operating_characteristics(apply_offset_log(normalized[tag], added[tag]), truth)
        report.add("slope", tag, dataset, slope(oc.levels, oc.means), "log")
        report.add("oc_sd_lowest", tag, dataset, oc.sds[0], "log")
        report.add("oc_bias_lowest", tag, dataset, oc.bias[0], "log")

        profiles.setdefault("oc_mean", []).extend((x, tag.value, y) for x, y in zip(oc.levels, oc.means))
        profiles.setdefault("oc_sd", []).extend((x, tag.value, y) for x, y in zip(oc.levels, oc.sds))
        ratios = consecutive_log_ratios(oc.levels, oc.means)
        mids = 0.5 * (oc.levels[1:] + oc.levels[:-1])
        profiles.setdefault("oc_log_ratio", []).extend((x, tag.value, y) for x, y in zip(mids, ratios))


def _auc_rows(
    report: EvalReport,
    profiles: dict[str, list[ProfileRow]],
    batch: SimulatedBatch,
    results: list[ReplicateResult],
    methods: Sequence[CorrectionTag],
    offsets: Sequence[float],
) -> None:
    groups = np.asarray(batch.groups)
    n_reg = batch.arrays[0].n_reg
    proportions = groups.astype(float)

    for tag in methods:
        intensities = _normalized(results, tag, n_reg)
        for offset in offsets:
            if tag == CorrectionTag.SUBTRACT and offset <= 0:
                continue
            t_auc = ttest_auc(intensities, groups, batch.de_labels, offset)
            r_auc = spearman_auc(intensities, proportions, batch.de_labels, offset)
            report.add(f"auc_ttest_offset_{offset:g}", tag, batch.label, t_auc, "log")
            report.add(f"auc_spearman_offset_{offset:g}", tag, batch.label, r_auc, "log")
            profiles.setdefault("auc_ttest", []).append((offset, tag.value, t_auc))
            profiles.setdefault("auc_spearman", []).append((offset, tag.value, r_auc))


# -----------------------------
# Batch
# -----------------------------
def evaluate_batch(
    batch: SimulatedBatch,
    methods: Sequence[CorrectionTag] = ALL_METHODS,
    offsets: Sequence[float] = (0.0,),
    threads: int | None = None,
) -> BatchEvaluation:
    methods = tuple(dict.fromkeys(CorrectionTag(m) for m in methods))
    if not methods:
        raise InputError("no correction methods selected")

    def run(i: int) -> ReplicateResult:
        return evaluate_replicate(batch.arrays[i], batch.truth, methods)

    with ThreadPoolExecutor(max_workers=threads or get_settings().threads) as pool:
        results = list(pool.map(run, range(batch.n_arrays)))

    not_converged = sum(len(r.not_converged) for r in results)
    if not_converged:
        logger.warning("%d fits did not converge", not_converged)

    report = EvalReport()
    profiles: dict[str, list[ProfileRow]] = {}

    _accuracy_rows(report, batch, results, methods)
    _parameter_rows(report, batch, results)
    try:
        _fit_distance_rows(report, batch, results[0])
    except NormgamError as e:
        logger.warning("skipping fit-distance ratios: %s", e)

    if batch.shared_signal and batch.n_arrays >= 2:
        _shared_signal_rows(report, profiles, batch, results, methods)
    if batch.groups is not None and batch.de_labels is not None:
        _auc_rows(report, profiles, batch, results, methods, offsets)

    logger.info("evaluated %d arrays x %d methods: %d report rows", batch.n_arrays, len(methods), len(report.rows))
    return BatchEvaluation(report=report, profiles=profiles, not_converged=not_converged)
