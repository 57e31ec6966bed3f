"""
Structured logging setup.

All modules log through ``structlog.get_logger(__name__)``; this module wires the
processor chain once, from the runtime settings.
"""

import logging
import sys

import structlog

from app.core.config import settings


def configure_logging(level: str = None, json: bool = None) -> None:
    """Configure structlog for console or JSON rendering on stderr"""
    level = (level or settings.LOG_LEVEL).upper()
    json = settings.LOG_JSON if json is None else json

    renderer = (
        structlog.processors.JSONRenderer(sort_keys=True)
        if json
        else structlog.dev.ConsoleRenderer(colors=False)
    )
    structlog.configure(
        processors=[
            structlog.contextvars.merge_contextvars,
            structlog.processors.add_log_level,
            structlog.processors.StackInfoRenderer(),
            structlog.processors.format_exc_info,
            renderer,
        ],
        wrapper_class=structlog.make_filtering_bound_logger(getattr(logging, level)),
        logger_factory=structlog.PrintLoggerFactory(file=sys.stderr),
        cache_logger_on_first_use=False,
    )
