from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from app.core.errors import InputError

GRID_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class DetectionTable:
    """Regular intensities with their detection p-values (multiples of 1/n_neg)."""

    regular: np.ndarray
    pvalues: np.ndarray
    n_neg: int

    def __post_init__(self) -> None:
        x = np.asarray(self.regular, dtype=float).ravel()
        p = np.asarray(self.pvalues, dtype=float).ravel()

        if self.n_neg < 1:
            raise InputError(f"n_neg must be >= 1, got {self.n_neg}")
        if x.size == 0:
            raise InputError("detection table is empty")
        if x.shape != p.shape:
            raise InputError(f"{x.size} intensities but {p.size} p-values")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(p))):
            raise InputError("detection table holds non-finite values")
        if np.any(p < -GRID_TOL) or np.any(p > 1 + GRID_TOL):
            raise InputError("detection p-values must lie in [0, 1]")

        scaled = p * self.n_neg
        off_grid = np.abs(scaled - np.round(scaled)) > GRID_TOL * self.n_neg
        if np.any(off_grid):
            bad = int(np.flatnonzero(off_grid)[0])
            raise InputError(
                f"p-value {p[bad]!r} (row {bad + 1}) is not a multiple of 1/{self.n_neg}"
            )

        object.__setattr__(self, "regular", x)
        object.__setattr__(self, "pvalues", np.round(scaled) / self.n_neg)

    @property
    def counts(self) -> np.ndarray:
        """Number of negatives above each regular intensity."""
        return np.round(self.pvalues * self.n_neg).astype(int)
