"""
Logging configuration for the SGDCT laboratory.
"""

import logging
from datetime import datetime
from pathlib import Path


class LoggerConfig:
    """Centralized logging configuration."""

    # Log levels
    DEBUG = logging.DEBUG
    INFO = logging.INFO
    WARNING = logging.WARNING
    ERROR = logging.ERROR

    # Log format
    LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    DATE_FORMAT = "%Y-%m-%d %H:%M:%S"

    @staticmethod
    def setup_logging(log_dir: Path, log_level: int = logging.INFO) -> None:
        """
        Set up logging configuration for the laboratory.

        Args:
            log_dir: Directory for the daily log file
            log_level: The minimum logging level to capture in the log file
        """
        log_dir = Path(log_dir)
        log_dir.mkdir(parents=True, exist_ok=True)

        # One log file per day
        log_filename = f"sgdct_{datetime.now().strftime('%Y%m%d')}.log"
        log_filepath = log_dir / log_filename

        file_handler = logging.FileHandler(log_filepath, encoding='utf-8')
        file_handler.setLevel(log_level)

        # Console only shows warnings and above; results go to CSV
        console_handler = logging.StreamHandler()
        console_handler.setLevel(logging.WARNING)

        logging.basicConfig(
            level=log_level,
            format=LoggerConfig.LOG_FORMAT,
            datefmt=LoggerConfig.DATE_FORMAT,
            handlers=[file_handler, console_handler],
            force=True,
        )

        logger = logging.getLogger(__name__)
        logger.info("=" * 60)
        logger.info("SGDCT laboratory started")
        logger.info(f"Log file: {log_filepath}")
        logger.info("=" * 60)

    @staticmethod
    def level_from_name(name: str) -> int:
        """
        Translate a level name such as "DEBUG" into a logging level.

        Args:
            name: Level name, case-insensitive

        Returns:
            The logging level, INFO when the name is unknown
        """
        level = logging.getLevelName(name.upper())
        return level if isinstance(level, int) else logging.INFO

    @staticmethod
    def get_logger(name: str) -> logging.Logger:
        """
        Get a logger instance for a specific module.

        Args:
            name: Name of the module/logger

        Returns:
            Configured logger instance
        """
        return logging.getLogger(name)


def get_logger(name: str) -> logging.Logger:
    """
    Convenience function to get a logger.

    Args:
        name: Name of the module requesting the logger

    Returns:
        Logger instance
    """
    return LoggerConfig.get_logger(name)
