"""
Experiment Config Validators
============================

One YAML file describes a whole experiment. Unknown keys are rejected at
every level; stage-2 weights missing from the file are filled from the
source annotation fraction.
"""
from pathlib import Path
from typing import Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from core.exceptions import ConfigError
from evaluation.entities import EvaluationConfig
from phantoms.entities import AnnotationConfig, PhantomConfig, SplitConfig
from segmentation.entities import Stage2Config
from selftraining.entities import SelfTrainingConfig
from translation.entities import Stage1Config

SCHEMA_VERSION = 1


class ExperimentConfig(BaseModel):
    """
    Full experiment description

    The global `seed` is copied into every stage config, and the self-training
    threshold is the single source of alpha.
    """
    model_config = ConfigDict(extra="forbid")

    schema_version: Literal[1] = SCHEMA_VERSION
    name: str = Field(default="desk", pattern=r"^[A-Za-z0-9_.-]+$")
    seed: int = 0
    output: Path = Path("runs")

    phantom: PhantomConfig = Field(default_factory=PhantomConfig)
    split: SplitConfig = Field(default_factory=SplitConfig)
    annotation: AnnotationConfig = Field(default_factory=AnnotationConfig)
    stage1: Stage1Config = Field(default_factory=Stage1Config)
    stage2: Stage2Config = Field(default_factory=Stage2Config)
    self_training: SelfTrainingConfig = Field(default_factory=SelfTrainingConfig)
    evaluation: EvaluationConfig = Field(default_factory=EvaluationConfig)

    @model_validator(mode="after")
    def resolve_defaults(self) -> "ExperimentConfig":
        try:
            self.stage2.weights = self.stage2.weights.resolved(self.annotation.source_fraction)
        except ValueError as e:
            raise ValueError(f"stage2.weights.seg_pT: {e}") from e
        self.stage2.alpha = self.self_training.alpha
        self.phantom.seed = self.stage1.seed = self.stage2.seed = self.seed
        return self

    def stage_dir(self, stage: str, key: str) -> Path:
        return self.output / self.name / stage / key[:12]


def format_validation_error(error: ValidationError) -> str:
    """One `dotted.key: constraint` line per failure"""
    lines = []
    for item in error.errors():
        location = ".".join(str(part) for part in item["loc"]) or "<root>"
        lines.append(f"{location}: {item['msg']}")
    return "; ".join(lines)


def parse_config(data: dict) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"invalid experiment config: {format_validation_error(e)}") from e


def load_config(path: Path) -> ExperimentConfig:
    """
    Read and validate an experiment YAML file

    Raises:
        ConfigError: missing file, malformed YAML, unknown key or out-of-range value
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    try:
        data = yaml.safe_load(path.read_text()) or {}
    except yaml.YAMLError as e:
        raise ConfigError(f"config file {path} is not valid YAML: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a mapping at the top level")
    return parse_config(data)


def apply_overrides(cfg: ExperimentConfig, seed: int | None = None, output: Path | None = None) -> ExperimentConfig:
    """CLI --seed / --out on top of a loaded config, re-validated"""
    update = {}
    if seed is not None:
        update["seed"] = seed
    if output is not None:
        update["output"] = Path(output)
    if not update:
        return cfg
    return parse_config(cfg.model_copy(update=update).model_dump(mode="json"))
