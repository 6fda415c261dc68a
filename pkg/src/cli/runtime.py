"""Per-command run bookkeeping.

A RunContext owns one command invocation: it creates the output
directory, writes the resolved run.cfg, records the run and every
artifact in the catalog, and writes CSV mirrors when asked to.
"""

import logging
from pathlib import Path
from typing import Optional

from sqlalchemy.exc import SQLAlchemyError

from src.config.settings import RunConfig, write_run_config
from src.database.utils import (
    compare_with_previous,
    file_sha256,
    finish_run,
    record_artifact,
    start_run,
)
from src.models.catalog import RunStatus
from src.storage.artifacts import csv_mirror

logger = logging.getLogger(__name__)


class RunContext:
    """Context manager around one command invocation."""

    def __init__(
        self,
        command: str,
        config: RunConfig,
        out_dir: str | Path | None = None,
        catalog_url: Optional[str] = None,
        use_catalog: bool = True,
    ) -> None:
        self.command = command
        self.config = config
        self.out_dir = Path(out_dir or config.output.directory)
        self.catalog_url = catalog_url
        self.use_catalog = use_catalog
        self.run_id: Optional[int] = None
        self.hashes: dict[str, str] = {}

    def __enter__(self) -> "RunContext":
        self.out_dir.mkdir(parents=True, exist_ok=True)
        cfg = write_run_config(self.config, self.out_dir / "run.cfg")
        if self.use_catalog:
            try:
                self.run_id = start_run(self.command, self.config.config_hash(), self.catalog_url)
            except SQLAlchemyError as e:
                logger.warning(f"⚠️ Run catalog unavailable, continuing without provenance: {e}")
                self.use_catalog = False
        self.register(cfg, "config")
        logger.info(f"🚀 {self.command} writing to {self.out_dir}")
        return self

    def path(self, name: str) -> Path:
        return self.out_dir / name

    def register(self, path: Path, role: str, mirror: bool = False) -> Path:
        """Hash a written file, record it and optionally write its CSV mirror."""
        if mirror and self.config.output.csv:
            self.register(csv_mirror(path), "csv")
        if self.use_catalog and self.run_id is not None:
            try:
                self.hashes[str(path)] = record_artifact(self.run_id, path, role, self.catalog_url)
                return path
            except SQLAlchemyError as e:
                logger.warning(f"⚠️ Could not record artifact {path}: {e}")
        self.hashes[str(path)] = file_sha256(path)
        return path

    def compare(self) -> Optional[bool]:
        """Whether outputs match the last successful run with this config."""
        if not self.use_catalog:
            return None
        try:
            return compare_with_previous(
                self.config.config_hash(), self.hashes, self.run_id, self.catalog_url
            )
        except SQLAlchemyError as e:
            logger.warning(f"⚠️ Reproducibility check skipped: {e}")
            return None

    def __exit__(self, exc_type, exc, tb) -> bool:
        status = RunStatus.SUCCEEDED if exc_type is None else RunStatus.FAILED
        if self.use_catalog and self.run_id is not None:
            try:
                finish_run(self.run_id, status, str(exc) if exc else None, self.catalog_url)
            except SQLAlchemyError as e:
                logger.warning(f"⚠️ Could not close run {self.run_id}: {e}")
        if exc_type is None:
            logger.info(f"✅ {self.command} finished")
        return False
