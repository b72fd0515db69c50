"""
Logging configuration for the CL-UAP toolkit.

Sets up a rotating file handler and an optional console handler on the root
logger, and offers ``RunLogCapture`` to mirror log output into a run
directory while a command executes.

Usage:
    >>> from cl_uap.config import Config
    >>> from cl_uap.logging_config import setup_logging
    >>> config = Config.from_env()
    >>> setup_logging(config.log)
"""

import logging
import sys
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Optional, Union

from cl_uap.config import LogConfig


def setup_logging(
    log_config: Optional[LogConfig] = None,
    log_level_override: Optional[str] = None,
) -> None:
    """
    Configure logging for the entire application.

    Call once at startup (the CLI does this before dispatching). The root
    logger receives:
    - File handler with rotation
    - Console handler (optional)
    - Consistent formatting

    Args:
        log_config: LogConfig instance. If None, loads from environment.
        log_level_override: Optional log level override (e.g., 'DEBUG').
    """
    if log_config is None:
        log_config = LogConfig.from_env()

    level_name = (log_level_override or log_config.level).upper()
    level = getattr(logging, level_name, logging.INFO)

    root_logger = logging.getLogger()
    root_logger.setLevel(level)

    # Remove any existing handlers to avoid duplicates
    for handler in list(root_logger.handlers):
        root_logger.removeHandler(handler)
        handler.close()

    formatter = logging.Formatter(
        fmt=log_config.format_string,
        datefmt=log_config.date_format,
    )

    log_config.log_dir.mkdir(parents=True, exist_ok=True)
    log_path = log_config.log_dir / log_config.log_file
    file_handler = RotatingFileHandler(
        filename=str(log_path),
        maxBytes=log_config.max_bytes,
        backupCount=log_config.backup_count,
        encoding='utf-8',
    )
    file_handler.setLevel(level)
    file_handler.setFormatter(formatter)
    root_logger.addHandler(file_handler)

    if log_config.console_output:
        console_handler = logging.StreamHandler(sys.stdout)
        console_handler.setLevel(level)
        console_handler.setFormatter(formatter)
        root_logger.addHandler(console_handler)

    logging.debug(f"Logging configured: level={level_name}, file={log_path}")


def get_logger(name: str) -> logging.Logger:
    """
    Get a logger instance with the specified name.

    Args:
        name: Logger name, typically __name__ of the calling module.

    Returns:
        A logger instance.
    """
    return logging.getLogger(name)


class RunLogCapture:
    """
    Context manager that copies root log records into ``<run_dir>/run.log``.

    The handler is removed and closed on exit, leaving the previously
    configured handlers untouched.

    Example:
        >>> with RunLogCapture(Path("runs/cl-001")):
        ...     train_uap_cl(...)
    """

    def __init__(
        self,
        run_dir: Union[str, Path],
        level: str = "INFO",
        filename: str = "run.log",
        format_string: str = "%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    ):
        """
        Initialize the capture.

        Args:
            run_dir: Directory receiving the log file.
            level: Minimum level written to the run log.
            filename: Log file name inside run_dir.
            format_string: Formatter pattern.
        """
        self.path = Path(run_dir) / filename
        self.level = getattr(logging, level.upper(), logging.INFO)
        self.format_string = format_string
        self.handler: Optional[logging.FileHandler] = None
        self.original_level: Optional[int] = None

    def __enter__(self) -> Path:
        """Attach the run log handler."""
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.handler = logging.FileHandler(str(self.path), encoding="utf-8")
        self.handler.setLevel(self.level)
        self.handler.setFormatter(logging.Formatter(self.format_string))
        root_logger = logging.getLogger()
        self.original_level = root_logger.level
        if root_logger.level > self.level or root_logger.level == logging.NOTSET:
            root_logger.setLevel(self.level)
        root_logger.addHandler(self.handler)
        return self.path

    def __exit__(self, exc_type, exc_val, exc_tb):
        """Detach the handler and restore the root level."""
        root_logger = logging.getLogger()
        if self.handler is not None:
            root_logger.removeHandler(self.handler)
            self.handler.close()
            self.handler = None
        if self.original_level is not None:
            root_logger.setLevel(self.original_level)
        return False
