from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class IrregularHistogram:
    """Piecewise-constant density: heights[i] on [breakpoints[i], breakpoints[i+1]]."""

    breakpoints: np.ndarray
    heights: np.ndarray

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.breakpoints)

    @property
    def n_bins(self) -> int:
        return int(self.heights.size)

    def mass(self) -> float:
        return float(np.sum(self.heights * self.widths))


@dataclass(frozen=True, eq=False)
class OperatingCharacteristics:
    """
    Per signal level: mean true log-signal, mean observed log-intensity and
    mean replicate SD.
    """

    levels: np.ndarray
    means: np.ndarray
    sds: np.ndarray

    @property
    def bias(self) -> np.ndarray:
        return self.means - self.levels
