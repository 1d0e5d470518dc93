from __future__ import annotations

from functools import lru_cache

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """
    Process-wide knobs. Read from the environment (prefix NORMGAM_) and from
    a local .env file when present, e.g.:
      NORMGAM_THREADS=4
      NORMGAM_LOG_LEVEL=DEBUG
    """

    model_config = SettingsConfigDict(
        env_prefix="NORMGAM_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    threads: int = Field(1, ge=1)
    log_level: str = "INFO"
    output_digits: int = Field(17, ge=1, le=17)

    # density grid
    tail_sigmas: float = Field(8.0, gt=0)
    grid_points_per_sigma: int = Field(16, ge=8)
    max_grid_points: int = Field(2**24, ge=2**12)
    grid_cache_size: int = Field(64, ge=1)

    # optimizer
    optimizer_max_iter: int = Field(500, ge=10)
    optimizer_restarts: int = Field(2, ge=0)
    optimizer_rel_tol: float = Field(1e-8, gt=0)


@lru_cache
def get_settings() -> Settings:
    return Settings()
