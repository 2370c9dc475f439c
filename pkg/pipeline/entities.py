"""
Entity models for pipeline runs
"""
from datetime import datetime
from enum import Enum
from pathlib import Path

from pydantic import BaseModel, ConfigDict


class Stage(str, Enum):
    GEN_DATA = "gen-data"
    TRAIN_TRANS = "train-trans"
    SYNTH = "synth"
    TRAIN_SEG = "train-seg"
    SELF_TRAIN = "self-train"
    EVAL = "eval"
    REPORT = "report"


STAGE_ORDER = list(Stage)


class RunStatus(str, Enum):
    RUNNING = "running"
    COMPLETED = "completed"
    FAILED = "failed"
    SUPERSEDED = "superseded"


class ArtifactEntity(BaseModel):
    model_config = ConfigDict(from_attributes=True)

    artifact_id: str
    kind: str
    path: str

    @property
    def exists(self) -> bool:
        return Path(self.path).exists()


class RunManifestEntity(BaseModel):
    """Entity for one stage execution"""
    model_config = ConfigDict(from_attributes=True)

    id: int
    stage: Stage
    cache_key: str
    config_hash: str
    code_version: str
    seed: int
    status: RunStatus
    error: str | None
    started_at: datetime
    finished_at: datetime | None
    inputs: list[ArtifactEntity] = []
    outputs: list[ArtifactEntity] = []

    def output(self, kind: str) -> ArtifactEntity:
        return next(a for a in self.outputs if a.kind == kind)


class StagePlan(BaseModel):
    """Cache identity of a stage before it runs"""
    stage: Stage
    cache_key: str
    config_hash: str
    inputs: list[str]
    out_dir: Path


class PipelineResult(BaseModel):
    report_dir: Path | None
    # stage name -> "cached" | "ran" | "skipped"
    stages: dict[str, str]
    dice: dict[str, float] = {}
