from __future__ import annotations

from pathlib import Path

from pydantic import BaseModel, ConfigDict, Field, field_validator

from app.schemas.params import CorrectionTag


class RunManifest(BaseModel):
    """What a command was asked to do; validated before any work starts."""

    model_config = ConfigDict(frozen=True)

    command: str
    inputs: tuple[Path, ...] = ()
    overrides: dict[str, str] = Field(default_factory=dict)
    seed: int | None = Field(None, ge=0)
    methods: tuple[CorrectionTag, ...] = ()
    offsets: tuple[float, ...] = ()
    out: Path | None = None

    @field_validator("inputs")
    @classmethod
    def _inputs_exist(cls, paths: tuple[Path, ...]) -> tuple[Path, ...]:
        missing = [str(p) for p in paths if not p.exists()]
        if missing:
            raise ValueError(f"missing input: {', '.join(missing)}")
        return paths

    @field_validator("offsets")
    @classmethod
    def _offsets_nonnegative(cls, offsets: tuple[float, ...]) -> tuple[float, ...]:
        if any(o < 0 for o in offsets):
            raise ValueError("offsets must be >= 0")
        return offsets

    def echo(self) -> list[str]:
        """Comment lines for output headers."""
        lines = [f"command={self.command}"]
        lines += [f"input={p}" for p in self.inputs]
        lines += [f"{k}={v}" for k, v in sorted(self.overrides.items())]
        if self.seed is not None:
            lines.append(f"seed={self.seed}")
        if self.methods:
            lines.append("methods=" + ",".join(m.value for m in self.methods))
        if self.offsets:
            lines.append("offsets=" + ",".join(repr(o) for o in self.offsets))
        return lines
