"""
Multiview SBM Test - Settings
=============================

Environment-backed defaults (prefix MVTEST_, optional .env file).
CLI flags take precedence over these values.
"""

import os
from functools import lru_cache
from pathlib import Path

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    model_config = SettingsConfigDict(env_prefix="MVTEST_", env_file=".env", extra="ignore")

    output_dir: Path = Path("./results")
    threads: int = Field(default_factory=lambda: os.cpu_count() or 1, ge=1)
    log_level: str = "INFO"
    ledger_file: str = "run_ledger.jsonl"
    default_perms: int = Field(200, ge=1)
    default_reps: int = Field(200, ge=1)
    uniform_popularity_low: float = Field(0.14, gt=0)
    uniform_popularity_high: float = Field(0.84, gt=0)

    @property
    def ledger_path(self) -> Path:
        return self.output_dir / self.ledger_file


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    return Settings()
