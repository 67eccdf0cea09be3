"""Process-level settings for icgrasp.

Environment Variable Overrides:
-------------------------------
All fields can be set with the ``ICGRASP_`` prefix, e.g.:

  ICGRASP_LOG_LEVEL=DEBUG
  ICGRASP_NUM_WORKERS=4
  ICGRASP_DATA_DIR=/data/icgrasp

Run-specific parameters (seeds, scene counts, network sizes) live in the JSON run configs,
see ``icgrasp.core.config``.
"""

from pathlib import Path
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Application settings with environment variable support."""

    model_config = SettingsConfigDict(
        env_prefix="ICGRASP_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    # Application paths
    DATA_DIR: Path = Path.home() / ".icgrasp" / "data"
    RUNS_DIR: Path = Path.home() / ".icgrasp" / "runs"

    # Logging
    LOG_LEVEL: str = "INFO"
    LOG_JSON: bool = True

    # Execution
    NUM_WORKERS: int = 1
    DEFAULT_SEED: int = 0

    def ensure_dirs(self) -> None:
        """Ensure all required directories exist."""
        self.DATA_DIR.mkdir(parents=True, exist_ok=True)
        self.RUNS_DIR.mkdir(parents=True, exist_ok=True)


# Global settings instance
settings = Settings()
