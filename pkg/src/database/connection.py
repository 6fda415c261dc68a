"""Run catalog connection and session management.

This module handles:
1. Catalog URL resolution from the environment
2. SQLAlchemy engine management, one engine per URL
3. Catalog session creation and lifecycle
"""

import os
from contextlib import contextmanager
from typing import Iterator

from dotenv import load_dotenv
from sqlalchemy.engine import Engine
from sqlmodel import Session, SQLModel, create_engine

from src.config.logger import setup_logger
from src.models import catalog  # noqa: F401  (registers the catalog tables)

# Set up logging
connection_logger = setup_logger("database.connection", "database_connection.log")

# Load environment variables
load_dotenv()

DEFAULT_CATALOG_URL = "sqlite:///crom_catalog.db"


def create_catalog_url() -> str:
    """Return the catalog URL from CROM_CATALOG_URL (SQLite file by default)."""
    url = os.getenv("CROM_CATALOG_URL", DEFAULT_CATALOG_URL)
    connection_logger.debug("Catalog URL: %s", url)
    return url


# Engines keyed by URL
_engines: dict[str, Engine] = {}


def get_engine(url: str | None = None) -> Engine:
    """Get the SQLAlchemy engine for a catalog URL, creating it if necessary.

    Tables are created on first use.

    Args:
        url: catalog URL; defaults to create_catalog_url()

    Returns:
        SQLAlchemy engine instance
    """
    url = url or create_catalog_url()
    if url not in _engines:
        connection_logger.debug("Creating new catalog engine")
        connect_args = {"check_same_thread": False} if url.startswith("sqlite") else {}
        engine = create_engine(
            url,
            echo=False,
            pool_pre_ping=True,  # Verify connection before using from pool
            connect_args=connect_args,
        )
        SQLModel.metadata.create_all(engine)
        _engines[url] = engine
    return _engines[url]


@contextmanager
def catalog_session(url: str | None = None) -> Iterator[Session]:
    """Open a session on the catalog at url, rolled back if the block raises.

    Example:
        with catalog_session() as session:
            session.add(record)
            session.commit()
    """
    with Session(get_engine(url)) as session:
        connection_logger.debug("📖 Opening catalog session")
        try:
            yield session
        except Exception as e:
            session.rollback()
            connection_logger.error(f"❌ Catalog session rolled back: {e}")
            raise
        finally:
            connection_logger.debug("📕 Closing catalog session")
