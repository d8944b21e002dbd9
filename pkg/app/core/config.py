from typing import List
from pydantic_settings import BaseSettings, SettingsConfigDict
from pydantic import Field


class Settings(BaseSettings):
    """Application settings loaded from environment variables"""

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    # API Configuration
    api_title: str = "MIMO Relay Design Simulator"
    api_description: str = "Joint source precoder and relay matrix design for two-user MIMO relay networks with direct links"
    api_version: str = "1.0.0"

    # Logging
    log_level: str = "INFO"

    # Run registry
    run_timeout: int = 3600  # 1 hour in seconds
    max_api_trials: int = 200

    # Campaign defaults
    default_trials: int = 500
    default_seed: int = 2012
    workers: int = 1
    output_dir: str = "results"
    default_schemes_str: str = Field(default="jds,nas,sos,nod", alias="DEFAULT_SCHEMES")

    # Solver defaults
    outer_tol: float = 1e-4
    outer_max_iters: int = 50
    inner_tol: float = 1e-6
    inner_max_iters: int = 100
    mse_max_iters: int = 500

    # Server Configuration
    host: str = "0.0.0.0"
    port: int = 8000

    @property
    def default_schemes(self) -> List[str]:
        """Parse comma-separated scheme names from environment variable"""
        return [item.strip().lower() for item in self.default_schemes_str.split(',') if item.strip()]


# Global settings instance
settings = Settings()
