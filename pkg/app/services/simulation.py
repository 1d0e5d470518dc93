"""
Simulated batches S1-S4.

Randomness: SeedSequence(seed).spawn(n_arrays + 1). Child 0 draws everything
shared by the batch (the S3/S4 signal and the differential subset), child l
draws replicate l. Within a replicate the order is signal, noise, negatives.
"""

from __future__ import annotations

import logging
from collections import Counter
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from app.core.config import get_settings
from app.core.errors import InputError
from app.models.batch import SimulatedBatch
from app.models.probe_array import ProbeArray
from app.schemas.params import MixtureNoiseSpec, NormalGammaParams
from app.schemas.simulation import ParameterSet, Scenario, SimulationSpec
from app.services.distributions import sample_gamma, sample_mixture_noise, sample_normal
from app.services.evaluation import quantile_normalize

logger = logging.getLogger(__name__)


def _ps(id_: int, mu: float, sigma: float, k: float, theta: float, source: str) -> ParameterSet:
    return ParameterSet(id=id_, params=NormalGammaParams(mu=mu, sigma=sigma, k=k, theta=theta), source=source)


# Estimated from single arrays of three experimental data sets (E1-E3).
PARAMETER_SETS: dict[int, ParameterSet] = {
    ps.id: ps
    for ps in (
        _ps(1, 53.0, 4.4, 0.12, 1785.0, "E1, normal-gamma MLE"),
        _ps(2, 138.0, 24.0, 0.11, 4949.0, "E2, normal-gamma MLE"),
        _ps(3, 43.5, 5.8, 1.0, 226.0, "E1, normexp MLE"),
        _ps(4, 170.0, 41.0, 1.0, 505.0, "E2, normexp MLE"),
        _ps(5, 52.8, 5.0, 1.0, 8.33, "E1, normexp RMA"),
        _ps(6, 223.0, 37.0, 1.0, 33.8, "E2, normexp RMA"),
        _ps(7, 93.0, 11.0, 0.08, 3230.0, "E3, normal-gamma MLE"),
        _ps(8, 69.0, 13.0, 1.0, 277.0, "E3, normexp MLE"),
        _ps(9, 92.0, 14.0, 1.0, 10.5, "E3, normexp RMA"),
    )
}


def true_params(spec: SimulationSpec) -> NormalGammaParams:
    if spec.params is not None:
        return spec.params
    return PARAMETER_SETS[spec.parameter_set].params


# -----------------------------
# Replicates
# -----------------------------
def _replicate(
    spec: SimulationSpec,
    p: NormalGammaParams,
    rng: np.random.Generator,
    shared: np.ndarray | None,
) -> tuple[ProbeArray, np.ndarray]:
    signal = shared if shared is not None else sample_gamma(spec.n_reg, p.signal, rng)

    if spec.scenario == Scenario.S2:
        mix = MixtureNoiseSpec(p=spec.p, normal=p.noise)
        noise = sample_mixture_noise(spec.n_reg, mix, rng)
        neg = sample_mixture_noise(spec.n_neg, mix, rng)
    elif spec.scenario == Scenario.S4:
        pool = np.asarray(spec.pool, dtype=float)
        noise = rng.choice(pool, size=spec.n_reg, replace=True)
        neg = rng.choice(pool, size=spec.n_neg, replace=True)
    else:
        noise = sample_normal(spec.n_reg, p.noise, rng)
        neg = sample_normal(spec.n_neg, p.noise, rng)

    return ProbeArray(regular=signal + noise, negative=neg), signal


def simulate(spec: SimulationSpec, threads: int | None = None) -> SimulatedBatch:
    p = true_params(spec)
    children = np.random.SeedSequence(spec.seed).spawn(spec.n_arrays + 1)
    batch_rng = np.random.default_rng(children[0])

    base_signal = None
    de_labels = None
    groups = None
    group_signals: list[np.ndarray] = []

    if spec.shared_signal:
        base_signal = sample_gamma(spec.n_reg, p.signal, batch_rng)
        base_signal.setflags(write=False)
        group_signals = [base_signal]

        if spec.de_fraction > 0:
            n_de = int(round(spec.de_fraction * spec.n_reg))
            de_labels = np.zeros(spec.n_reg, dtype=int)
            de_labels[batch_rng.choice(spec.n_reg, size=n_de, replace=False)] = 1

            changed = np.where(de_labels == 1, base_signal * spec.fold_change, base_signal)
            changed.setflags(write=False)
            group_signals.append(changed)

            half = spec.n_arrays // 2
            groups = tuple(0 if i < half else 1 for i in range(spec.n_arrays))

    def run(i: int) -> tuple[ProbeArray, np.ndarray]:
        rng = np.random.default_rng(children[i + 1])
        shared = group_signals[groups[i]] if groups else base_signal
        return _replicate(spec, p, rng, shared)

    workers = threads or get_settings().threads
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(run, range(spec.n_arrays)))

    arrays = tuple(arr for arr, _ in results)
    if groups:
        signals = tuple(group_signals[g] for g in groups)
    elif base_signal is not None:
        signals = (base_signal,)
    else:
        signals = tuple(sig for _, sig in results)

    logger.info(
        "simulated %s: %d arrays x (%d regular, %d negative), seed=%d",
        spec.scenario.value, spec.n_arrays, spec.n_reg, spec.n_neg, spec.seed,
    )
    label = f"set{spec.parameter_set}" if spec.parameter_set else "custom"
    return SimulatedBatch(
        arrays=arrays,
        signals=signals,
        truth=p,
        label=label,
        groups=groups,
        de_labels=de_labels,
    )


# -----------------------------
# Empirical noise pool (S4)
# -----------------------------
def _resample_sorted(values: np.ndarray, n: int) -> np.ndarray:
    """Sorted values interpolated onto n evenly spaced quantile positions."""
    x = np.sort(values)
    if x.size == n:
        return x
    return np.interp(np.linspace(0.0, 1.0, n), np.linspace(0.0, 1.0, x.size), x)


def build_empirical_pool(arrays) -> np.ndarray:
    """Quantile-normalize the negative controls of several arrays and concatenate them."""
    negs = [np.asarray(a.negative if isinstance(a, ProbeArray) else a, dtype=float) for a in arrays]
    if not negs or any(v.size == 0 for v in negs):
        raise InputError("empirical pool needs arrays with negative probes")
    if len(negs) < 2:
        raise InputError("empirical pool needs at least 2 arrays")

    lengths = Counter(v.size for v in negs)
    if len(lengths) > 1:
        modal = max(lengths.items(), key=lambda kv: (kv[1], kv[0]))[0]
        logger.warning("negative counts differ across arrays %s; interpolating to %d", dict(lengths), modal)
        negs = [_resample_sorted(v, modal) for v in negs]

    return np.concatenate(quantile_normalize(negs))
