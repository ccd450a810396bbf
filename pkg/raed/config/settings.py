from __future__ import annotations

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    model_config = SettingsConfigDict(
        env_prefix="RAED_", env_file=".env", env_file_encoding="utf-8", extra="ignore"
    )

    # Observability
    LOG_LEVEL: str = "INFO"


settings = Settings()
