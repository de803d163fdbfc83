"""
Configuration module for the SGDCT fluctuation laboratory.
Handles environment variables and run-wide defaults.
"""

import os
from pathlib import Path
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()


def _env_int(name: str, default: int) -> int:
    raw = os.getenv(name)
    if raw is None or not raw.strip():
        return default
    try:
        value = int(raw)
    except ValueError:
        raise ValueError(f"{name} must be an integer, got {raw!r}")
    if value < 1:
        raise ValueError(f"{name} must be >= 1, got {value}")
    return value


# Worker count fallback when neither --workers nor the config file sets one
SGDCT_THREADS = _env_int("SGDCT_THREADS", 1)

# Logging; the log directory defaults to <out>/logs unless set explicitly
LOG_LEVEL = os.getenv("SGDCT_LOG_LEVEL", "INFO").upper()
LOG_DIR = Path(os.environ["SGDCT_LOG_DIR"]) if os.getenv("SGDCT_LOG_DIR", "").strip() else None

# Default output root for CLI runs
OUTPUT_DIR = Path(os.getenv("SGDCT_OUTPUT_DIR", "out"))

# Version tag written into every CSV header
SCHEMA_VERSION = "sgdct-lab/1"


def log_dir_for(out_dir: Path) -> Path:
    """Log directory for a run writing under out_dir."""
    return LOG_DIR if LOG_DIR is not None else Path(out_dir) / "logs"
