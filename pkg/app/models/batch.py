from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from app.core.errors import InputError
from app.models.probe_array import ProbeArray
from app.schemas.params import NormalGammaParams


@dataclass(frozen=True, eq=False)
class SimulatedBatch:
    """
    Arrays of one batch plus the truth they were drawn from.

    `signals` holds one vector per array, or a single vector when every array
    shares it. `groups` and `de_labels` are set by the two-group analog.
    """

    arrays: tuple[ProbeArray, ...]
    signals: tuple[np.ndarray, ...]
    truth: NormalGammaParams
    label: str = ""
    groups: tuple[int, ...] | None = None
    de_labels: np.ndarray | None = None

    def __post_init__(self) -> None:
        if len(self.signals) not in (1, len(self.arrays)):
            raise InputError("need one shared signal vector or one per array")
        for i, arr in enumerate(self.arrays):
            if self.signal_for(i).shape != arr.regular.shape:
                raise InputError("signal vectors must align with regular probes")

    @property
    def n_arrays(self) -> int:
        return len(self.arrays)

    @property
    def shared_signal(self) -> bool:
        return len(self.signals) == 1

    def signal_for(self, index: int) -> np.ndarray:
        return self.signals[0] if len(self.signals) == 1 else self.signals[index]
