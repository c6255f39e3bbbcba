"""Toolkit configuration settings using Pydantic BaseSettings.

This module provides configuration for the urn lab with support for
loading settings from environment variables or a .env file.

Numeric tolerances that define an algorithm (power iteration, eigenvalue
clustering, projection stopping rules) live next to the algorithm as module
constants. Only operational knobs and verdict thresholds are configurable here.
"""

import logging
from typing import Any, List, Literal

from dotenv import load_dotenv
from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

# Load environment variables from .env file
load_dotenv()


class VerdictSettings(BaseSettings):
    """Thresholds used by the verify-* and probe-* commands."""

    rate_slope_tolerance: float = Field(default=0.15, alias="URNLAB_RATE_SLOPE_TOLERANCE")
    atom_max_multiplicity: int = Field(default=5, alias="URNLAB_ATOM_MAX_MULTIPLICITY")
    divergence_growth_threshold: float = Field(default=1.1, alias="URNLAB_DIVERGENCE_GROWTH_THRESHOLD")
    finite_growth_band: List[float] = Field(default_factory=lambda: [0.5, 2.0])
    convergence_tolerance: float = Field(default=0.1, alias="URNLAB_CONVERGENCE_TOLERANCE")
    draw_fraction_tolerance: float = Field(default=0.05, alias="URNLAB_DRAW_FRACTION_TOLERANCE")
    ks_threshold: float = Field(default=0.05, alias="URNLAB_KS_THRESHOLD")
    chi_square_alpha: float = Field(default=0.01, alias="URNLAB_CHI_SQUARE_ALPHA")

    model_config = SettingsConfigDict(
        extra='ignore',
        env_file='.env',
        env_file_encoding='utf-8'
    )


class NumericsSettings(BaseSettings):
    """Sizes of precomputed tables and enumeration limits."""

    log_zeta_table_size: int = Field(default=2**20, alias="URNLAB_LOG_ZETA_TABLE_SIZE", gt=1000)
    enumeration_state_limit: int = Field(default=100_000, alias="URNLAB_ENUMERATION_STATE_LIMIT", gt=0)

    model_config = SettingsConfigDict(
        extra='ignore',
        env_file='.env',
        env_file_encoding='utf-8'
    )


class Settings(BaseSettings):
    """Main application settings."""

    app_name: str = "FriedmanUrnLab"
    log_level: str = Field(default="INFO", alias="URNLAB_LOG_LEVEL")

    # 0 means "use os.cpu_count()"
    default_threads: int = Field(default=0, alias="URNLAB_THREADS", ge=0)
    default_format: Literal["json", "csv", "both"] = Field(default="both", alias="URNLAB_FORMAT")
    default_output_dir: str = Field(default="runs", alias="URNLAB_OUTPUT_DIR")

    verdicts: VerdictSettings = Field(default_factory=VerdictSettings)
    numerics: NumericsSettings = Field(default_factory=NumericsSettings)

    model_config = SettingsConfigDict(env_file='.env', env_file_encoding='utf-8', extra='ignore')

    @field_validator("log_level", mode='before')
    def validate_log_level(cls, v: Any) -> str:
        """Normalize the level name and reject names the logging module does not know."""
        if not isinstance(v, str):
            raise ValueError("Log level must be a string")
        level = v.strip().upper()
        if not isinstance(logging.getLevelName(level), int):
            raise ValueError(f"Unknown log level: {v}")
        return level


# Create a singleton instance
settings = Settings()
