"""Configuration for the GEM engine, simulator and harness."""

import os
from pathlib import Path

from .errors import ConfigurationError
from .identifiers import IdGenMode, SegmentLength, Traceability

SCHEDULERS = ("fifo", "random")


class Config:
    """Runtime configuration read from ``GEM_*`` environment variables."""

    LOG_LEVEL: str = os.getenv("GEM_LOG_LEVEL", "info")

    # Identifier generation
    ID_MODE: str = os.getenv("GEM_ID_MODE", "untraceable")
    ID_LENGTH: str = os.getenv("GEM_ID_LENGTH", "variable")
    ID_BYTES: int = int(os.getenv("GEM_ID_BYTES", "8"))

    # Simulator
    SCHEDULER: str = os.getenv("GEM_SCHEDULER", "fifo")
    SEED: int = int(os.getenv("GEM_SEED", "0"))
    STEP_BUDGET: int = int(os.getenv("GEM_STEP_BUDGET", "1000000"))

    # TCP transport
    TCP_HOST: str = os.getenv("GEM_TCP_HOST", "127.0.0.1")

    # Metrics settings
    METRICS_ENABLED: bool = os.getenv("GEM_METRICS_ENABLED", "false").lower() == "true"
    METRICS_PATH: Path = Path(os.getenv("GEM_METRICS_PATH", "gem-metrics.csv"))

    @classmethod
    def id_mode(cls) -> IdGenMode:
        """Build the default identifier mode from the environment."""
        try:
            return IdGenMode(
                traceability=Traceability(cls.ID_MODE.lower()),
                length=SegmentLength(cls.ID_LENGTH.lower()),
                size=cls.ID_BYTES,
            )
        except ValueError as exc:
            raise ConfigurationError(f"Invalid identifier mode: {exc}") from exc

    @classmethod
    def validate(cls) -> None:
        """Raise ConfigurationError if any setting is out of range."""
        cls.id_mode()
        if cls.SCHEDULER not in SCHEDULERS:
            raise ConfigurationError(
                f"GEM_SCHEDULER must be one of {', '.join(SCHEDULERS)}, got {cls.SCHEDULER!r}"
            )
        if cls.STEP_BUDGET <= 0:
            raise ConfigurationError("GEM_STEP_BUDGET must be positive")
