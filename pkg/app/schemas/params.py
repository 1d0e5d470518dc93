from __future__ import annotations

try:
    from enum import StrEnum
except ImportError:  # Python < 3.11
    from enum import Enum

    class StrEnum(str, Enum):
        def __str__(self) -> str:
            return self.value

from pydantic import BaseModel, ConfigDict, Field, model_validator


class _Frozen(BaseModel):
    model_config = ConfigDict(frozen=True)


# -----------------------------
# Elementary distributions
# -----------------------------
class NormalParams(_Frozen):
    mu: float
    sigma: float = Field(gt=0)


class GammaParams(_Frozen):
    k: float = Field(gt=0)
    theta: float = Field(gt=0)


class MixtureNoiseSpec(_Frozen):
    """(1-p) N(mu, sigma) + p chi2(df, ncp) background noise."""

    p: float = Field(ge=0, le=1)
    normal: NormalParams
    chisq_df: int = Field(3, ge=1)
    chisq_ncp: float = Field(55.0, ge=0)


# -----------------------------
# Convolution models
# -----------------------------
class NormalGammaParams(_Frozen):
    mu: float
    sigma: float = Field(gt=0)
    k: float = Field(gt=0)
    theta: float = Field(gt=0)

    @property
    def noise(self) -> NormalParams:
        return NormalParams(mu=self.mu, sigma=self.sigma)

    @property
    def signal(self) -> GammaParams:
        return GammaParams(k=self.k, theta=self.theta)

    def shape_shifted(self, dk: float = 1.0) -> "NormalGammaParams":
        return self.model_copy(update={"k": self.k + dk})


class NormexpParams(_Frozen):
    mu: float
    sigma: float = Field(gt=0)
    alpha: float = Field(gt=0)

    @property
    def noise(self) -> NormalParams:
        return NormalParams(mu=self.mu, sigma=self.sigma)

    def as_normal_gamma(self) -> NormalGammaParams:
        return NormalGammaParams(mu=self.mu, sigma=self.sigma, k=1.0, theta=self.alpha)


# -----------------------------
# Background-correction methods
# -----------------------------
class CorrectionTag(StrEnum):
    NG_TRUE = "NG_TRUE"
    NG_MLE = "NG_MLE"
    NEXP_MLE = "NEXP_MLE"
    NEXP_RMA = "NEXP_RMA"
    NEXP_NP = "NEXP_NP"
    SUBTRACT = "SUBTRACT"


NG_TAGS = frozenset({CorrectionTag.NG_TRUE, CorrectionTag.NG_MLE})
NEXP_TAGS = frozenset({CorrectionTag.NEXP_MLE, CorrectionTag.NEXP_RMA, CorrectionTag.NEXP_NP})


class CorrectionMethod(_Frozen):
    """
    One of the six background corrections S^(0)..S^(5).

    The payload must match the tag:
      - NG_*   -> normal_gamma
      - NEXP_* -> normexp
      - SUBTRACT -> negative_median
    """

    tag: CorrectionTag
    normal_gamma: NormalGammaParams | None = None
    normexp: NormexpParams | None = None
    negative_median: float | None = None

    @model_validator(mode="after")
    def _payload_matches_tag(self) -> "CorrectionMethod":
        have = {
            "normal_gamma": self.normal_gamma is not None,
            "normexp": self.normexp is not None,
            "negative_median": self.negative_median is not None,
        }
        if self.tag in NG_TAGS:
            want = "normal_gamma"
        elif self.tag in NEXP_TAGS:
            want = "normexp"
        else:
            want = "negative_median"

        extra = [name for name, present in have.items() if present and name != want]
        if not have[want] or extra:
            raise ValueError(f"{self.tag} needs exactly the '{want}' payload")
        return self


MODEL_TAGS: dict[str, CorrectionTag] = {
    "normgam": CorrectionTag.NG_MLE,
    "normexp-mle": CorrectionTag.NEXP_MLE,
    "normexp-np": CorrectionTag.NEXP_NP,
    "normexp-rma": CorrectionTag.NEXP_RMA,
}
