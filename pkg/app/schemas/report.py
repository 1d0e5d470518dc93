from __future__ import annotations

import math
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator

Scale = Literal["raw", "log", "-"]


class ReportRow(BaseModel):
    model_config = ConfigDict(frozen=True)

    metric: str
    method: str
    dataset: str
    scale: Scale = "-"
    value: float

    @field_validator("value")
    @classmethod
    def _finite(cls, v: float) -> float:
        if not math.isfinite(v):
            raise ValueError("report values must be finite")
        return v


class EvalReport(BaseModel):
    """Long-format metric table: one row per (metric, method, dataset, scale)."""

    rows: list[ReportRow] = Field(default_factory=list)

    def add(self, metric: str, method: str, dataset: str, value: float, scale: Scale = "-") -> None:
        self.rows.append(ReportRow(metric=metric, method=method, dataset=dataset, scale=scale, value=float(value)))

    def get(self, metric: str, method: str, scale: Scale = "-") -> float:
        for row in self.rows:
            if row.metric == metric and row.method == method and row.scale == scale:
                return row.value
        raise KeyError((metric, method, scale))
