"""Run catalog utility functions.

This module provides tools for:
1. Catalog connectivity verification
2. Table presence checks
3. Recording runs and the artifacts they write
4. Reproducibility comparisons between runs
"""

from datetime import datetime, timezone
import hashlib
from pathlib import Path
from typing import Dict, Optional, Tuple

from sqlalchemy import inspect
from sqlmodel import select, text

from src.config.logger import setup_logger
from src.models.catalog import ArtifactRecord, RunRecord, RunStatus
from .connection import catalog_session, get_engine

# Create a logger specifically for catalog utilities
utils_logger = setup_logger("database.utils", "database_utils.log")

REQUIRED_TABLES = {"run", "artifact"}


def verify_catalog_connection(url: str | None = None) -> Tuple[bool, Optional[str]]:
    """Test catalog connectivity with a trivial query.

    Returns:
        Tuple[bool, Optional[str]]: a tuple containing:
            - Success status (True if connection works, False otherwise)
            - Error message if connection fails, None if successful
    """
    try:
        with catalog_session(url) as session:
            session.exec(text("SELECT 1")).one()
            utils_logger.info("✅ Catalog connection successful")
            return True, None

    except Exception as e:
        error_msg = f"Catalog connection failed: {str(e)}"
        utils_logger.error(f"❌ {error_msg}")
        return False, error_msg


def verify_required_tables(url: str | None = None) -> Tuple[bool, Optional[str]]:
    """Verify that the run and artifact tables exist.

    Returns:
        Tuple[bool, Optional[str]]: Success status and error message if any
    """
    try:
        existing_tables = set(inspect(get_engine(url)).get_table_names())
        missing_tables = REQUIRED_TABLES - existing_tables

        if missing_tables:
            error_msg = f"Missing required tables: {missing_tables}"
            utils_logger.error(f"❌ {error_msg}")
            return False, error_msg

        utils_logger.info("✅ All required tables exist")
        return True, None

    except Exception as e:
        error_msg = f"Failed to verify tables: {str(e)}"
        utils_logger.error(f"❌ {error_msg}")
        return False, error_msg


def get_catalog_info(url: str | None = None) -> Dict[str, object]:
    """Collect the catalog URL, its tables and the number of recorded runs."""
    info: Dict[str, object] = {}
    try:
        engine = get_engine(url)
        info["catalog_url"] = str(engine.url)
        info["available_tables"] = sorted(inspect(engine).get_table_names())
        with catalog_session(url) as session:
            info["recorded_runs"] = len(session.exec(select(RunRecord)).all())
        utils_logger.info("✅ Successfully retrieved catalog information")

    except Exception as e:
        error_msg = f"❌ Failed to retrieve catalog information: {str(e)}"
        utils_logger.error(error_msg)
        info["error"] = error_msg

    return info


def file_sha256(path: str | Path) -> str:
    """Hex SHA-256 digest of a file's contents."""
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def start_run(command: str, config_hash: str, url: str | None = None) -> int:
    """Insert a running RunRecord and return its id."""
    with catalog_session(url) as session:
        run = RunRecord(Command=command, ConfigHash=config_hash)
        session.add(run)
        session.commit()
        session.refresh(run)
        utils_logger.debug(f"📖 Recorded run {run.RunID} ({command})")
        return run.RunID


def record_artifact(
    run_id: int, path: str | Path, role: str, url: str | None = None
) -> str:
    """Hash a written file and attach it to a run.

    Returns:
        the file's SHA-256 digest
    """
    sha = file_sha256(path)
    with catalog_session(url) as session:
        session.add(
            ArtifactRecord(RunID=run_id, Path=str(path), Role=role, Sha256=sha)
        )
        session.commit()
    return sha


def finish_run(
    run_id: int,
    status: RunStatus,
    message: Optional[str] = None,
    url: str | None = None,
) -> None:
    """Mark a run as finished with the given status."""
    with catalog_session(url) as session:
        run = session.get(RunRecord, run_id)
        if run is None:
            utils_logger.error(f"❌ Run {run_id} not found in catalog")
            return
        run.Status = status
        run.FinishedAt = datetime.now(timezone.utc)
        run.Message = message
        session.add(run)
        session.commit()


def compare_with_previous(
    config_hash: str,
    hashes: Dict[str, str],
    exclude_run: Optional[int] = None,
    url: str | None = None,
) -> Optional[bool]:
    """Compare artifact hashes with the latest successful run of the same config.

    Artifacts are matched by file name.

    Returns:
        None if there is no previous run, else whether every shared artifact
        has an identical hash
    """
    with catalog_session(url) as session:
        query = (
            select(RunRecord)
            .where(RunRecord.ConfigHash == config_hash)
            .where(RunRecord.Status == RunStatus.SUCCEEDED)
            .order_by(RunRecord.RunID.desc())
        )
        if exclude_run is not None:
            query = query.where(RunRecord.RunID != exclude_run)
        previous = session.exec(query).first()
        if previous is None:
            return None
        earlier = {Path(a.Path).name: a.Sha256 for a in previous.artifacts}

    shared = set(earlier) & {Path(p).name for p in hashes}
    current = {Path(p).name: h for p, h in hashes.items()}
    identical = bool(shared) and all(earlier[name] == current[name] for name in shared)
    if identical:
        utils_logger.info(f"✅ Outputs identical to run {previous.RunID}")
    else:
        utils_logger.warning(f"⚠️ Outputs differ from run {previous.RunID}")
    return identical
