"""
Logging setup.

Every module logs through a child of the `psm_rr` logger, which owns the
handlers: stderr always, plus a rotating file when PSM_LOG_FILE is not empty.
"""

import logging
import os
import sys
from logging.handlers import RotatingFileHandler
from typing import Optional

ROOT_LOGGER = "psm_rr"
LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
DATE_FORMAT = '%Y-%m-%d %H:%M:%S'
MAX_LOG_BYTES = 10 * 1024 * 1024
LOG_BACKUPS = 5

_configured = False


def configure_logging(level: int = logging.INFO, log_file: Optional[str] = None) -> logging.Logger:
    """
    Attach the handlers to the `psm_rr` logger once; later calls are no-ops.

    Args:
        level: Logging level for the logger and its handlers
        log_file: Rotating log file path; console only when empty or None

    Returns:
        logging.Logger: the `psm_rr` logger
    """
    global _configured
    root = logging.getLogger(ROOT_LOGGER)
    if _configured:
        return root

    root.setLevel(level)
    formatter = logging.Formatter(LOG_FORMAT, datefmt=DATE_FORMAT)

    # stdout carries the CLI reports
    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setFormatter(formatter)
    root.addHandler(console_handler)

    if log_file:
        log_dir = os.path.dirname(log_file)
        if log_dir:
            os.makedirs(log_dir, exist_ok=True)
        file_handler = RotatingFileHandler(log_file, maxBytes=MAX_LOG_BYTES, backupCount=LOG_BACKUPS,
                                           encoding='utf-8')
        file_handler.setFormatter(formatter)
        root.addHandler(file_handler)

    _configured = True
    return root


def get_logger(name: str) -> logging.Logger:
    """Module logger, e.g. get_logger(__name__) -> 'psm_rr.app.services.lmm'."""
    from app.utils.config import Config

    configure_logging(getattr(logging, Config.LOG_LEVEL, logging.INFO), Config.LOG_FILE or None)
    if name != ROOT_LOGGER and not name.startswith(f"{ROOT_LOGGER}."):
        name = f"{ROOT_LOGGER}.{name}"
    return logging.getLogger(name)
