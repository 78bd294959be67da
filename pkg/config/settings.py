"""relcom settings"""
from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Process-wide defaults, overridable through RELCOM_* environment variables"""

    log_level: str = Field(default="INFO")
    log_file: str = Field(default="logs/relcom.log")

    default_seed: int = Field(default=20150101, ge=0, lt=2**64)
    workers: int = Field(default=1, ge=1)
    solver_chunk_size: int = Field(default=1 << 15, ge=1)

    signal_speed_mps: float = Field(default=299_792_458.0, gt=0)
    schedule_safety_factor: float = Field(default=0.9, gt=0, lt=1)
    strict_paper_mode: bool = Field(default=False)

    attack_trials: int = Field(default=100_000, ge=1)
    max_game_order: int = Field(default=8, ge=2)
    max_attack_space: int = Field(default=1 << 24, ge=1)


    model_config = SettingsConfigDict(
        env_prefix="RELCOM_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )


settings = Settings()


def get_settings() -> Settings:
    """Process-wide relcom settings, read once from the environment and .env"""
    return settings
