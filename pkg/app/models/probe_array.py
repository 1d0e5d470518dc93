from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from app.core.errors import InputError
from app.schemas.params import NormalGammaParams, NormexpParams

MIN_REGULAR = 100
MIN_NEGATIVE = 10


def _as_vector(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float).ravel()
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} intensities must be finite")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ProbeArray:
    """One array: regular intensities, negative controls, optional detection p-values."""

    regular: np.ndarray
    negative: np.ndarray
    detection_pvalues: np.ndarray | None = None
    probe_ids: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "regular", _as_vector(self.regular, "regular"))
        object.__setattr__(self, "negative", _as_vector(self.negative, "negative"))

        if self.detection_pvalues is not None:
            pv = _as_vector(self.detection_pvalues, "detection p-value")
            if pv.shape != self.regular.shape:
                raise InputError("detection p-values must align with regular probes")
            object.__setattr__(self, "detection_pvalues", pv)

        if self.probe_ids is not None and len(self.probe_ids) != self.regular.size:
            raise InputError("probe ids must align with regular probes")

    @property
    def n_reg(self) -> int:
        return int(self.regular.size)

    @property
    def n_neg(self) -> int:
        return int(self.negative.size)

    def require_sizes(self, *, regular: int = MIN_REGULAR, negative: int = MIN_NEGATIVE) -> "ProbeArray":
        if self.n_reg < regular:
            raise InputError(f"need at least {regular} regular probes, got {self.n_reg}")
        if self.n_neg < negative:
            raise InputError(f"need at least {negative} negative probes, got {self.n_neg}")
        return self

    def with_negatives(self, negative) -> "ProbeArray":
        return ProbeArray(
            regular=self.regular,
            negative=negative,
            detection_pvalues=self.detection_pvalues,
            probe_ids=self.probe_ids,
        )

    def transformed(self, scale: float = 1.0, shift: float = 0.0) -> "ProbeArray":
        return ProbeArray(
            regular=self.regular * scale + shift,
            negative=self.negative * scale + shift,
            detection_pvalues=self.detection_pvalues,
            probe_ids=self.probe_ids,
        )


@dataclass(frozen=True)
class FitResult:
    params: NormalGammaParams | NormexpParams
    loglik: float
    iterations: int
    converged: bool
    init_fallback: bool = False
    notes: tuple[str, ...] = field(default_factory=tuple)

    @property
    def model(self) -> str:
        return "normgam" if isinstance(self.params, NormalGammaParams) else "normexp"
