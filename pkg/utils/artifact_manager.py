from json import dumps
from logging import getLogger, basicConfig
from pathlib import Path
from typing import Any, List
import os

import pandas as pd

from src.config import LOG_FORMAT, LOG_LEVEL

logger = getLogger(__name__)
basicConfig(level=LOG_LEVEL, format=LOG_FORMAT)


class ArtifactError(Exception):
    """Custom exception for artifact write failures."""

    pass


class ArtifactManager:
    """
    Writes run artifacts into one output directory. Every write goes to a
    temporary sibling first and is renamed into place; the manager remembers
    what it wrote so a failed run can remove its partial outputs.
    """

    def __init__(self, output_dir: str | Path) -> None:
        """
        Initialize the manager with its output directory.
        Args:
            output_dir (str | Path): Directory receiving the artifacts.
        """
        self.output_dir = Path(output_dir)
        self.written: List[Path] = []

    def path(self, name: str) -> Path:
        return self.output_dir / name

    def _atomic(self, name: str, write) -> Path:
        target = self.path(name)
        tmp_path = target.with_name(f".{target.name}.tmp")
        try:
            target.parent.mkdir(parents=True, exist_ok=True)
            write(tmp_path)
            os.replace(tmp_path, target)
        except (OSError, ValueError) as e:
            tmp_path.unlink(missing_ok=True)
            logger.error(f"Failed to write {target}: {e}")
            raise ArtifactError(f"Failed to write {target}: {e}") from e
        self.written.append(target)
        return target

    def write_text(self, name: str, text: str) -> Path:
        """
        Atomically write a text artifact.
        Args:
            name (str): Path relative to the output directory.
            text (str): Content.
        Returns:
            Path: The written file.
        Raises:
            ArtifactError: If the filesystem operation fails.
        """
        return self._atomic(name, lambda tmp: tmp.write_text(text, encoding="utf-8"))

    def write_json(self, name: str, payload: Any) -> Path:
        return self.write_text(name, dumps(payload, indent=2, sort_keys=True, default=str))

    def write_csv(self, name: str, frame: pd.DataFrame) -> Path:
        """
        Atomically write a DataFrame as CSV with a fixed float format, so
        identical results give identical bytes.
        """
        return self._atomic(name, lambda tmp: frame.to_csv(tmp, index=False, float_format="%.17g"))

    def track(self, path: str | Path) -> Path:
        """Register a file written by another writer so cleanup can remove it."""
        path = Path(path)
        self.written.append(path)
        return path

    def cleanup(self) -> None:
        """Remove every artifact written through this manager."""
        for path in reversed(self.written):
            try:
                path.unlink(missing_ok=True)
            except OSError as e:
                logger.warning(f"Could not remove partial output {path}: {e}")
        if self.written:
            logger.info(f"Removed {len(self.written)} partial output(s) from {self.output_dir}")
        self.written = []
