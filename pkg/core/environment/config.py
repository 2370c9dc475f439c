"""
Runtime settings for the tumor domain-adaptation pipeline
"""
from pathlib import Path
from typing import Literal

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Machine-level settings (where to write, which device), read from env / .env"""

    model_config = SettingsConfigDict(
        env_prefix="TUMORDA_",
        env_file=".env",
        case_sensitive=False,
        extra="ignore",
    )

    # Environment
    environment: str = "development"

    # Output
    output_root: Path = Path("runs")
    manifest_db_name: str = "manifest.sqlite"

    # Compute
    device: Literal["auto", "cpu", "cuda"] = "auto"
    num_workers: int = 0
    deterministic: bool = True

    # Logging
    log_level: str = "INFO"

    def get_manifest_db_url(self, output_root: Path | None = None) -> str:
        """
        SQLite URL of the run-manifest store

        Args:
            output_root: overrides the configured output root (CLI --out)

        Returns:
            SQLAlchemy database URL
        """
        root = Path(output_root or self.output_root)
        root.mkdir(parents=True, exist_ok=True)
        return f"sqlite:///{(root / self.manifest_db_name).resolve()}"


settings = Settings()
