"""
Logging for the pragmabench harness.

Every component logs through a child of the ``pragmabench`` logger. Handlers
live on that parent only: stderr always, plus a file when LOG_FILE or
``--log-file`` names one. Stdout is left to metrics lines, tables and exports.
"""

import logging
import os
import sys
from pathlib import Path
from typing import Optional

ROOT_LOGGER_NAME = "pragmabench"

CONSOLE_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
FILE_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(funcName)s:%(lineno)d - %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"


def _level(name: Optional[str]) -> int:
    return getattr(logging, (name or "INFO").upper(), logging.INFO)


def _attach_file(root: logging.Logger, log_file: str) -> None:
    for handler in [h for h in root.handlers if isinstance(h, logging.FileHandler)]:
        root.removeHandler(handler)
        handler.close()
    try:
        Path(log_file).parent.mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(log_file, mode="a", encoding="utf-8")
    except OSError as e:
        root.warning(f"Failed to set up file logging at {log_file}: {e}")
        return
    file_handler.setFormatter(logging.Formatter(FILE_FORMAT, datefmt=DATE_FORMAT))
    root.addHandler(file_handler)


def _harness_root() -> logging.Logger:
    root = logging.getLogger(ROOT_LOGGER_NAME)
    if not root.handlers:
        root.setLevel(_level(os.getenv("LOG_LEVEL")))
        root.propagate = False
        console = logging.StreamHandler(sys.stderr)
        console.setFormatter(logging.Formatter(CONSOLE_FORMAT, datefmt=DATE_FORMAT))
        root.addHandler(console)
        if os.getenv("LOG_FILE"):
            _attach_file(root, os.environ["LOG_FILE"])
    return root


def get_pipeline_logger(name: str, level: Optional[str] = None) -> logging.Logger:
    """
    Logger for one harness component, e.g. ``get_pipeline_logger("runner")``.

    Args:
        name: Component name; qualified under ``pragmabench``
        level: Optional level for this component only

    Returns:
        Logger whose records reach the shared harness handlers
    """
    _harness_root()
    qualified = name if name.startswith(ROOT_LOGGER_NAME) else f"{ROOT_LOGGER_NAME}.{name}"
    logger = logging.getLogger(qualified)
    if level:
        logger.setLevel(_level(level))
    return logger


def setup_pipeline_logging(level: str = "INFO", log_file: Optional[str] = None):
    """
    Apply a level and optional log file to every harness logger.

    Environment Variables:
        LOG_LEVEL: Level used when this is never called
        LOG_FILE: File output used when this is never called
    """
    os.environ["LOG_LEVEL"] = level.upper()
    if log_file:
        os.environ["LOG_FILE"] = log_file

    root = _harness_root()
    root.setLevel(_level(level))
    if log_file:
        _attach_file(root, log_file)


def log_pipeline_stage(logger: logging.Logger, stage: str, status: str = "START"):
    """Stage banner; START and COMPLETE bracket the stage, ERROR closes it."""
    separator = "=" * 50
    if status == "START":
        logger.info(separator)
        logger.info(f"STAGE: {stage} - {status}")
    elif status == "COMPLETE":
        logger.info(f"STAGE: {stage} - {status}")
        logger.info(separator)
    elif status == "ERROR":
        logger.error(f"STAGE: {stage} - {status}")
        logger.error(separator)


def log_data_operation(
    logger: logging.Logger, operation: str, count: int, entity_type: str = "records"
):
    logger.info(f"{operation}: {count:,} {entity_type}")


def log_error_with_context(
    logger: logging.Logger,
    error: Exception,
    context: str,
    identifiers: Optional[dict] = None,
):
    """
    Log a handled error with the ids needed to find the affected sample or run.

    Args:
        logger: Logger instance
        error: Exception that occurred
        context: What was being done (e.g., 'stage 1 completion')
        identifiers: Relevant ids (sample_id, strategy, provider, ...)
    """
    error_msg = f"Error in {context}: {error}"
    if identifiers:
        error_msg += " [" + ", ".join(f"{k}={v}" for k, v in identifiers.items()) + "]"
    logger.error(error_msg)
    logger.debug("Full traceback:", exc_info=True)
