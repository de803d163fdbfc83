"""
CSV service for writing and reading the laboratory's result tables.
"""

import json
from pathlib import Path
from typing import Any, Dict, Mapping, Union

import pandas as pd

import config
from ..models.constants import LabConfig
from ..models.errors import ConfigurationError
from logger_config import get_logger

logger = get_logger(__name__)


class CSVService:
    """
    Handles CSV output for every subcommand.

    This service provides:
    - A versioned comment header (schema, resolved config, seed, flagged paths)
    - Deterministic number formatting so reruns are byte-identical
    - A guard against writes outside the output directory
    """

    @staticmethod
    def resolve(out_dir: Union[str, Path], relative: Union[str, Path]) -> Path:
        """
        Target path of an output file.

        Raises:
            ConfigurationError: the path escapes out_dir
        """
        root = Path(out_dir).resolve()
        target = (root / relative).resolve()
        if target != root and root not in target.parents:
            raise ConfigurationError(f"output path {relative} escapes the output directory {root}")
        return target

    @staticmethod
    def header_lines(metadata: Mapping[str, Any]) -> list:
        """Comment header: schema version first, then one `key = value` line per entry."""
        lines = [f"schema = {json.dumps(config.SCHEMA_VERSION)}"]
        for key, value in metadata.items():
            lines.append(f"{key} = {json.dumps(value, default=str)}")
        return [LabConfig.COMMENT_PREFIX + line for line in lines]

    @staticmethod
    def write(df: pd.DataFrame, out_dir: Union[str, Path], relative: Union[str, Path],
              metadata: Mapping[str, Any]) -> Path:
        """
        Write a table with its comment header.

        Args:
            df: Table to write
            out_dir: Output root (writes never leave it)
            relative: File path relative to out_dir
            metadata: Resolved config, seed, flagged-path count, ...

        Returns:
            The written path
        """
        path = CSVService.resolve(out_dir, relative)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as handle:
            for line in CSVService.header_lines(metadata):
                handle.write(line + "\n")
            df.to_csv(handle, index=False, float_format=LabConfig.CSV_FLOAT_FORMAT, lineterminator="\n")
        logger.info(f"[CSV] Wrote {path} ({df.shape[0]} rows × {df.shape[1]} cols)")
        return path

    @staticmethod
    def to_text(df: pd.DataFrame) -> str:
        """The table body as written to disk, without the comment header."""
        return df.to_csv(index=False, float_format=LabConfig.CSV_FLOAT_FORMAT, lineterminator="\n")

    @staticmethod
    def load(path: Union[str, Path]) -> pd.DataFrame:
        """Read a table written by write(), skipping the comment header."""
        return pd.read_csv(path, comment="#")

    @staticmethod
    def read_header(path: Union[str, Path]) -> Dict[str, Any]:
        """Parse the comment header back into a dict."""
        header: Dict[str, Any] = {}
        with open(path, encoding="utf-8") as handle:
            for line in handle:
                if not line.startswith(LabConfig.COMMENT_PREFIX):
                    break
                key, _, value = line[len(LabConfig.COMMENT_PREFIX):].rstrip("\n").partition(" = ")
                header[key] = json.loads(value)
        return header
