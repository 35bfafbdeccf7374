import logging
import os
from typing import List

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    # App
    app_env: str = "development"
    app_title: str = "Multilingual Alignment Lab"
    app_description: str = (
        "Desk-scale laboratory for multilingual audio-text contrastive training. "
        "Trains small dual encoders with the random-language baseline, 1-to-K contrastive learning "
        "and audio-English co-anchor contrastive learning on synthetic corpora, verifies the "
        "weight-error and momentum-error bounds empirically, and reports retrieval consistency metrics."
    )
    app_version: str = "0.4.0"
    log_level: str = "INFO"

    # Outputs / workers
    default_out_dir: str = "runs"
    default_jobs: int = 1

    # Numerics
    default_tau: float = 0.07
    default_eta: float = 1e-3
    default_eps_adam: float = 1e-8
    fd_epsilon: float = 1e-6

    # Experiments
    min_recommended_seeds: int = 5

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    @property
    def strategies(self) -> List[str]:
        """Training strategies in report order (baseline first)."""
        return ["mlclap", "cacl", "kcl"]


logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)


def _validate_on_startup(settings: Settings) -> None:
    fatal_errors: List[str] = []

    if settings.default_tau <= 0:
        fatal_errors.append(f"DEFAULT_TAU must be positive, got {settings.default_tau}")
    if settings.default_eps_adam <= 0:
        fatal_errors.append(f"DEFAULT_EPS_ADAM must be positive, got {settings.default_eps_adam}")
    if settings.default_jobs < 1:
        fatal_errors.append(f"DEFAULT_JOBS must be at least 1, got {settings.default_jobs}")

    cpu_count = os.cpu_count() or 1
    if settings.default_jobs > cpu_count:
        logger.warning(f"DEFAULT_JOBS={settings.default_jobs} exceeds the {cpu_count} available CPUs.")

    if settings.default_eta > 0.1:
        logger.warning(f"DEFAULT_ETA={settings.default_eta} is large for the desk-scale encoders; training may diverge.")

    if fatal_errors:
        raise RuntimeError("; ".join(fatal_errors))


# Instantiate settings once and expose module-level constants
settings = Settings()
logging.getLogger().setLevel(settings.log_level.upper())
_validate_on_startup(settings)

APP_ENV = settings.app_env
APP_TITLE = settings.app_title
APP_DESCRIPTION = settings.app_description
APP_VERSION = settings.app_version

DEFAULT_OUT_DIR = settings.default_out_dir
DEFAULT_JOBS = settings.default_jobs

DEFAULT_TAU = settings.default_tau
DEFAULT_ETA = settings.default_eta
DEFAULT_EPS_ADAM = settings.default_eps_adam
FD_EPSILON = settings.fd_epsilon

MIN_RECOMMENDED_SEEDS = settings.min_recommended_seeds
STRATEGIES = settings.strategies
