"""
SQLAlchemy Models for run manifests
"""
from datetime import datetime

from sqlalchemy import Column, DateTime, ForeignKey, Index, Integer, String, Table, Text, func
from sqlalchemy.orm import Mapped, mapped_column, relationship

from core.database.config import Base

manifest_input = Table(
    "manifest_input",
    Base.metadata,
    Column("manifest_id", ForeignKey("run_manifest.id", ondelete="CASCADE"), primary_key=True),
    Column("artifact_id", ForeignKey("artifact.id", ondelete="CASCADE"), primary_key=True),
)


class RunManifest(Base):
    """
    One execution of one pipeline stage

    A stage is reusable when a completed manifest with the same cache key
    exists and all of its output artifacts are still on disk.
    """
    __tablename__ = "run_manifest"

    id: Mapped[int] = mapped_column(Integer, primary_key=True)
    stage: Mapped[str] = mapped_column(String(20), nullable=False, index=True)
    cache_key: Mapped[str] = mapped_column(String(64), nullable=False, index=True)
    config_hash: Mapped[str] = mapped_column(String(64), nullable=False)
    code_version: Mapped[str] = mapped_column(String(40), nullable=False)
    seed: Mapped[int] = mapped_column(Integer, nullable=False)
    status: Mapped[str] = mapped_column(
        String(12),
        nullable=False,
        default="running",
        comment="running, completed, failed, superseded"
    )
    error: Mapped[str | None] = mapped_column(Text, nullable=True)

    started_at: Mapped[datetime] = mapped_column(
        DateTime(timezone=True),
        server_default=func.now(),
        nullable=False
    )
    finished_at: Mapped[datetime | None] = mapped_column(DateTime(timezone=True), nullable=True)

    outputs: Mapped[list["Artifact"]] = relationship(back_populates="producer", lazy="selectin")
    inputs: Mapped[list["Artifact"]] = relationship(secondary=manifest_input, lazy="selectin")

    __table_args__ = (
        Index("idx_stage_key_status", "stage", "cache_key", "status"),
    )


class Artifact(Base):
    """A dataset, checkpoint, label set, evaluation or report directory"""
    __tablename__ = "artifact"

    id: Mapped[int] = mapped_column(Integer, primary_key=True)
    artifact_id: Mapped[str] = mapped_column(String(80), nullable=False, unique=True)
    kind: Mapped[str] = mapped_column(String(20), nullable=False)
    path: Mapped[str] = mapped_column(String(500), nullable=False)
    produced_by: Mapped[int] = mapped_column(
        ForeignKey("run_manifest.id", ondelete="CASCADE"),
        nullable=False,
        index=True
    )

    producer: Mapped[RunManifest] = relationship(back_populates="outputs")
