"""
Configuration module for the Hele-Shaw verification harness.

This module handles process-level configuration using Pydantic Settings
with environment variable support. Experiment parameters live in
``app.schemas.experiment``; this module only carries what is shared by
every run (logging, default output location, worker count).
"""

from typing import Literal

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Application settings."""

    model_config = SettingsConfigDict(
        env_prefix="HELESHAW_",
        env_file=".env",
        case_sensitive=False,
        extra="ignore",
    )

    # Application Configuration
    app_name: str = Field(default="Hele-Shaw Verifier")
    app_version: str = Field(default="1.0.0")
    environment: str = Field(default="development")

    # Logging Configuration
    log_level: str = Field(default="INFO")
    log_format: Literal["json", "console"] = Field(default="console")

    # Run Configuration
    default_output_dir: str = Field(default="results")
    diagnostic_workers: int = Field(default=1, ge=1, le=64)

    @field_validator("environment")
    @classmethod
    def validate_environment(cls, v):
        """Validate environment value."""
        allowed = ["development", "testing", "production"]
        if v not in allowed:
            raise ValueError(f"Environment must be one of: {allowed}")
        return v

    @field_validator("log_level")
    @classmethod
    def validate_log_level(cls, v):
        """Validate log level."""
        allowed = ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]
        if v.upper() not in allowed:
            raise ValueError(f"Log level must be one of: {allowed}")
        return v.upper()


# Create global settings instance
settings = Settings()


def get_settings() -> Settings:
    """Get application settings."""
    return settings
