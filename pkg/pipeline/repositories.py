"""
Repositories for run manifests
"""
from datetime import datetime, timezone

from sqlalchemy import select, update
from sqlalchemy.orm import Session

from core.logger import logger
from pipeline.entities import RunManifestEntity, RunStatus
from pipeline.models import Artifact, RunManifest


class ManifestRepository:
    """
    Repository for stage manifests and the artifacts they consume and produce

    Every state change is committed at once so an interrupted pipeline
    keeps the stages it finished.
    """

    def __init__(self, session: Session):
        self.session = session

    def start(
        self,
        stage: str,
        cache_key: str,
        config_hash: str,
        code_version: str,
        seed: int,
        inputs: list[str],
    ) -> RunManifestEntity:
        """
        Open a manifest in status running

        Args:
            inputs: artifact ids consumed by the stage; unknown ids are ignored
        """
        manifest = RunManifest(
            stage=stage,
            cache_key=cache_key,
            config_hash=config_hash,
            code_version=code_version,
            seed=seed,
            status=RunStatus.RUNNING.value,
        )
        if inputs:
            manifest.inputs = list(self.session.scalars(select(Artifact).where(Artifact.artifact_id.in_(inputs))))
        self.session.add(manifest)
        self.session.commit()
        self.session.refresh(manifest)
        return RunManifestEntity.model_validate(manifest)

    def complete(self, manifest_id: int, outputs: list[tuple[str, str, str]]) -> RunManifestEntity:
        """
        Attach (artifact_id, kind, path) outputs and close the manifest

        An artifact produced again moves to the new manifest; the manifest
        that produced it before is marked superseded.
        """
        manifest = self.session.get(RunManifest, manifest_id)
        for artifact_id, kind, path in outputs:
            artifact = self.session.scalar(select(Artifact).where(Artifact.artifact_id == artifact_id))
            if artifact is None:
                self.session.add(Artifact(artifact_id=artifact_id, kind=kind, path=path, produced_by=manifest_id))
                continue
            previous = artifact.produced_by
            artifact.kind, artifact.path, artifact.produced_by = kind, path, manifest_id
            self.session.execute(
                update(RunManifest)
                .where(RunManifest.id == previous, RunManifest.id != manifest_id)
                .values(status=RunStatus.SUPERSEDED.value)
            )
        manifest.status = RunStatus.COMPLETED.value
        manifest.finished_at = datetime.now(timezone.utc)
        self.session.commit()
        manifest = self.session.scalar(
            select(RunManifest)
            .where(RunManifest.id == manifest_id)
            .execution_options(populate_existing=True)
        )
        return RunManifestEntity.model_validate(manifest)

    def fail(self, manifest_id: int, error: str) -> None:
        manifest = self.session.get(RunManifest, manifest_id)
        manifest.status = RunStatus.FAILED.value
        manifest.error = error[:2000]
        manifest.finished_at = datetime.now(timezone.utc)
        self.session.commit()

    def find_completed(self, stage: str, cache_key: str) -> RunManifestEntity | None:
        """Latest completed manifest for the key whose outputs are all on disk"""
        query = (
            select(RunManifest)
            .where(
                RunManifest.stage == stage,
                RunManifest.cache_key == cache_key,
                RunManifest.status == RunStatus.COMPLETED.value,
            )
            .order_by(RunManifest.id.desc())
        )
        for manifest in self.session.scalars(query):
            entity = RunManifestEntity.model_validate(manifest)
            if entity.outputs and all(a.exists for a in entity.outputs):
                return entity
            logger.warning(f"⚠️ Cached {stage} run {entity.id} lost an output on disk, ignoring it")
        return None

    def get_manifests(self, stage: str | None = None) -> list[RunManifestEntity]:
        query = select(RunManifest).order_by(RunManifest.id)
        if stage is not None:
            query = query.where(RunManifest.stage == stage)
        return [RunManifestEntity.model_validate(m) for m in self.session.scalars(query)]

    def orphan_inputs(self) -> list[str]:
        """Input references that no manifest produced (should always be empty)"""
        produced = {a.artifact_id for m in self.get_manifests() for a in m.outputs}
        consumed = {a.artifact_id for m in self.get_manifests() for a in m.inputs}
        return sorted(consumed - produced)
