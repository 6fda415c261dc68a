"""Run catalog tables.

This module contains SQLModel tables recording provenance:
1. RunRecord, one row per command invocation
2. ArtifactRecord, one row per file written by a run
"""

from datetime import datetime, timezone
from enum import Enum
from typing import List, Optional

from sqlalchemy import Enum as SQLAlchemyEnum
from sqlmodel import Field, Relationship, SQLModel


class RunStatus(str, Enum):
    """Lifecycle states of a recorded run."""

    RUNNING = "running"
    SUCCEEDED = "succeeded"
    FAILED = "failed"

    def __str__(self) -> str:
        return self.value


class RunRecord(SQLModel, table=True):
    """A single command invocation."""

    __tablename__ = "run"

    RunID: Optional[int] = Field(default=None, primary_key=True)
    Command: str = Field(nullable=False, index=True)
    ConfigHash: str = Field(nullable=False, index=True)
    Status: RunStatus = Field(
        default=RunStatus.RUNNING,
        sa_type=SQLAlchemyEnum(
            RunStatus, values_callable=lambda x: [e.value for e in x], native_enum=False
        ),
    )
    StartedAt: datetime = Field(default_factory=lambda: datetime.now(timezone.utc))
    FinishedAt: Optional[datetime] = None
    Message: Optional[str] = None

    artifacts: List["ArtifactRecord"] = Relationship(back_populates="run")


class ArtifactRecord(SQLModel, table=True):
    """A file written by a run, with its content hash."""

    __tablename__ = "artifact"

    ArtifactID: Optional[int] = Field(default=None, primary_key=True)
    RunID: int = Field(foreign_key="run.RunID", nullable=False)
    Path: str = Field(nullable=False)
    Role: str = Field(nullable=False)
    Sha256: str = Field(nullable=False, max_length=64)

    run: Optional[RunRecord] = Relationship(back_populates="artifacts")
