from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from app.schemas.params import NormalGammaParams


@dataclass(frozen=True)
class GridSpec:
    """
    Layout of one FFT density grid.

      T            mu + 5 sigma + gamma 0.99999-quantile
      lower        first abscissa (a lattice node, <= min(0, mu - 8 sigma))
      upper        last abscissa, also the right tail switch point
      left_switch  mu - tail_sigmas * sigma; nodes below use a tail evaluator
      step         spatial spacing h = pi / A
      A            frequency cutoff
      n_points     FFT length N (power of two)
    """

    T: float
    lower: float
    upper: float
    left_switch: float
    step: float
    A: float
    n_points: int


@dataclass(frozen=True, eq=False)
class DensityGrid:
    spec: GridSpec
    abscissae: np.ndarray
    values: np.ndarray
    params: NormalGammaParams
    log_spline: CubicSpline

    def trapezoid_mass(self, lo: float | None = None, hi: float | None = None) -> float:
        x, y = self.abscissae, self.values
        mask = np.ones_like(x, dtype=bool)
        if lo is not None:
            mask &= x >= lo
        if hi is not None:
            mask &= x <= hi
        return float(np.trapezoid(y[mask], x[mask]))
