"""Logging helpers for the nlevel toolkit."""
from __future__ import annotations

import logging
import os


def setup_logging() -> None:
    """Configure root logging from NLEVEL_LOG_LEVEL, falling back to LOG_LEVEL."""
    level = (os.getenv("NLEVEL_LOG_LEVEL") or os.getenv("LOG_LEVEL", "INFO")).upper()
    logging.basicConfig(
        level=level,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    # scipy's optimizers are chatty at DEBUG and drown the step log
    logging.getLogger("scipy").setLevel(max(logging.getLogger().level, logging.INFO))


__all__ = ["setup_logging"]
