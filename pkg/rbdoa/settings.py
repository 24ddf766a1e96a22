"""
Environment configuration.

Values come from the process environment, optionally seeded from a `.env` file
next to the project root.
"""

import logging
import os
from functools import lru_cache

from dotenv import load_dotenv
from pydantic import BaseModel, Field

load_dotenv(dotenv_path=os.path.join(os.path.dirname(os.path.dirname(__file__)), ".env"))


def _env_flag(name: str, default: bool = False) -> bool:
    raw = os.getenv(name)
    if raw is None:
        return default
    return raw.strip().lower() in ("1", "true", "yes", "on")


class Settings(BaseModel):
    """Process-wide settings read from RBDOA_* environment variables."""
    database_url: str = Field("sqlite:///rbdoa_runs.db", description="SQLAlchemy URL of the run-log database")
    log_level: str = Field("INFO", description="Root log level for CLI and API entry points")
    record_runs: bool = Field(False, description="Persist pipeline execution logs and sweep rows")
    sql_echo: bool = Field(False, description="Echo SQL statements")


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    return Settings(
        database_url=os.getenv("RBDOA_DATABASE_URL", "sqlite:///rbdoa_runs.db"),
        log_level=os.getenv("RBDOA_LOG_LEVEL", "INFO"),
        record_runs=_env_flag("RBDOA_RECORD_RUNS"),
        sql_echo=_env_flag("RBDOA_SQL_ECHO"),
    )


def configure_logging(level: str | None = None) -> None:
    """Set up root logging for the CLI and server entry points."""
    logging.basicConfig(
        level=(level or get_settings().log_level).upper(),
        format="%(asctime)s %(levelname)s %(name)s %(message)s",
    )
