"""
Logging for relmon: console and file handlers, test capture, and the JSON run-event log.
"""

import logging
import sys
import json
from pathlib import Path
from datetime import datetime
from typing import Any, Dict, List, Optional


# Run event logger - one JSON line per run event
_run_logger: Optional[logging.Logger] = None

ROOT_LOGGER_NAME = "src"

FILE_FORMAT = '%(asctime)s %(levelname)-7s %(name)s:%(lineno)d %(message)s'


def setup_file_logger(name: str, log_dir: Path, level: int = logging.INFO) -> logging.Logger:
    """
    Attach a timestamped file handler (``relmon_YYYYmmdd_HHMMSS.log``) to a logger.

    Args:
        name: Logger name.
        log_dir: Directory for the log file, created if missing.
        level: Level for both the logger and the handler.

    Returns:
        The logger.
    """
    log_dir.mkdir(parents=True, exist_ok=True)
    stamp = datetime.now().strftime("%Y%m%d_%H%M%S")

    handler = logging.FileHandler(log_dir / f"relmon_{stamp}.log", encoding='utf-8')
    handler.setLevel(level)
    handler.setFormatter(logging.Formatter(FILE_FORMAT))

    logger = logging.getLogger(name)
    logger.setLevel(level)
    logger.addHandler(handler)
    return logger


def setup_logging(log_dir: Optional[Path], level: str = "INFO", to_file: bool = False) -> logging.Logger:
    """
    Configure the package logger: console on stderr, optional file.

    Args:
        log_dir: Directory for the file handler.
        level: Level name (DEBUG, INFO, ...).
        to_file: Also write to a timestamped file in log_dir.

    Returns:
        The package logger.
    """
    numeric_level = getattr(logging, str(level).upper(), logging.INFO)
    logger = logging.getLogger(ROOT_LOGGER_NAME)
    logger.setLevel(numeric_level)

    if not any(getattr(h, "_relmon_console", False) for h in logger.handlers):
        handler = logging.StreamHandler(sys.stderr)
        handler._relmon_console = True
        handler.setFormatter(logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s'))
        logger.addHandler(handler)
    for handler in logger.handlers:
        handler.setLevel(numeric_level)

    if to_file and log_dir is not None:
        setup_file_logger(ROOT_LOGGER_NAME, log_dir, numeric_level)

    logger.debug("Logging initialized")
    return logger


def get_logger(name: str) -> logging.Logger:
    """
    Get a logger by name.

    Args:
        name: Logger name.

    Returns:
        Logger instance.
    """
    return logging.getLogger(name)


class LogCapture(logging.Handler):
    """Handler that keeps formatted records in ``messages`` while used as a context manager."""

    def __init__(self, logger_name: Optional[str] = None, level: int = logging.DEBUG):
        super().__init__(level)
        self._target = logging.getLogger(logger_name)
        self._saved_level = self._target.level
        self.messages: List[str] = []

    def emit(self, record: logging.LogRecord) -> None:
        self.messages.append(self.format(record))

    def __enter__(self) -> "LogCapture":
        self._saved_level = self._target.level
        if self._saved_level == logging.NOTSET or self._saved_level > self.level:
            self._target.setLevel(self.level)
        self._target.addHandler(self)
        return self

    def __exit__(self, *exc_info) -> None:
        self._target.removeHandler(self)
        self._target.setLevel(self._saved_level)


def get_run_logger(log_dir: Path = None) -> logging.Logger:
    """
    Get or create the run event logger.

    Args:
        log_dir: Directory for the runs.log file. If None, events are only
            propagated to the package logger.

    Returns:
        Logger for run events.
    """
    global _run_logger

    if _run_logger is not None:
        return _run_logger

    _run_logger = logging.getLogger(f"{ROOT_LOGGER_NAME}.runs")
    _run_logger.setLevel(logging.INFO)

    if log_dir is not None:
        log_dir.mkdir(parents=True, exist_ok=True)
        handler = logging.FileHandler(log_dir / "runs.log", encoding='utf-8')
        handler.setLevel(logging.INFO)
        handler.setFormatter(logging.Formatter('%(asctime)s - %(levelname)s - %(message)s'))
        _run_logger.addHandler(handler)

    return _run_logger


def log_run_event(event: str, details: Dict[str, Any] = None, task: str = None, success: bool = True):
    """
    Log a run event as a JSON payload.

    Args:
        event: What happened (e.g., "task_started", "task_finished").
        details: Additional details (exit code, residuals, config hash).
        task: The CLI task the event belongs to.
        success: Events that report a failure are logged at WARNING.
    """
    logger = get_run_logger()

    log_data = {
        "timestamp": datetime.now().isoformat(),
        "event": event,
        "task": task,
        "details": details or {},
    }

    if success:
        logger.info(json.dumps(log_data, default=str))
    else:
        logger.warning(json.dumps(log_data, default=str))
