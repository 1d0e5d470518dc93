from __future__ import annotations

try:
    from enum import StrEnum
except ImportError:  # Python < 3.11
    from enum import Enum

    class StrEnum(str, Enum):
        def __str__(self) -> str:
            return self.value

from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.schemas.params import NormalGammaParams


class Scenario(StrEnum):
    S1 = "s1"  # gamma signal + normal noise, fresh signal per array
    S2 = "s2"  # as S1 with mixture noise
    S3 = "s3"  # one signal vector shared by all arrays
    S4 = "s4"  # shared signal, noise resampled from an empirical pool


SHARED_SIGNAL = frozenset({Scenario.S3, Scenario.S4})


class ParameterSet(BaseModel):
    model_config = ConfigDict(frozen=True)

    id: int = Field(ge=1)
    params: NormalGammaParams
    source: str


class SimulationSpec(BaseModel):
    """
    Generator configuration for one batch.

    Exactly one of `parameter_set` / `params` names the truth. `p` belongs to
    S2, `pool` to S4, and the two-group analog (`de_fraction`) to S3/S4.
    """

    model_config = ConfigDict(frozen=True)

    scenario: Scenario
    parameter_set: int | None = Field(None, ge=1, le=9)
    params: NormalGammaParams | None = None

    n_reg: int = Field(25000, ge=1)
    n_neg: int = Field(1000, ge=1)
    n_arrays: int = Field(100, ge=1)

    p: float | None = Field(None, ge=0, le=1)
    pool: tuple[float, ...] | None = None

    de_fraction: float = Field(0.0, ge=0, lt=1)
    fold_change: float = Field(2.0, gt=0)

    seed: int = Field(ge=0)

    @model_validator(mode="after")
    def _fields_match_scenario(self) -> "SimulationSpec":
        if (self.parameter_set is None) == (self.params is None):
            raise ValueError("give exactly one of parameter_set or params")

        if self.scenario == Scenario.S2:
            if self.p is None:
                raise ValueError("scenario s2 needs the mixture weight p")
        elif self.p is not None:
            raise ValueError(f"mixture weight p only applies to s2, not {self.scenario}")

        if self.scenario == Scenario.S4:
            if not self.pool:
                raise ValueError("scenario s4 needs a nonempty empirical noise pool")
        elif self.pool is not None:
            raise ValueError(f"an empirical pool only applies to s4, not {self.scenario}")

        if self.de_fraction > 0:
            if self.scenario not in SHARED_SIGNAL:
                raise ValueError("de_fraction needs a shared-signal scenario (s3 or s4)")
            if self.n_arrays < 2:
                raise ValueError("de_fraction needs at least 2 arrays")
        return self

    @property
    def shared_signal(self) -> bool:
        return self.scenario in SHARED_SIGNAL

    def manifest_fields(self) -> dict[str, str]:
        """Flat key=value echo; the pool is summarized, not copied."""
        out = {
            "scenario": self.scenario.value,
            "n_reg": str(self.n_reg),
            "n_neg": str(self.n_neg),
            "n_arrays": str(self.n_arrays),
            "seed": str(self.seed),
            "de_fraction": repr(self.de_fraction),
            "fold_change": repr(self.fold_change),
        }
        if self.parameter_set is not None:
            out["parameter_set"] = str(self.parameter_set)
        if self.p is not None:
            out["p"] = repr(self.p)
        if self.pool is not None:
            out["pool_size"] = str(len(self.pool))
        return out
