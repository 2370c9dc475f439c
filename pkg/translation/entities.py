"""
Entity models for the translation stage
"""
from pathlib import Path

import numpy as np
import torch
from pydantic import BaseModel, ConfigDict, Field, model_validator

from losses.entities import Stage1Weights
from nets.entities import TranslationModelConfig
from phantoms.entities import Modality, Volume


class Stage1Config(BaseModel):
    """Translation training: AMSGrad, one discriminator then one generator update per batch"""
    model_config = ConfigDict(extra="forbid")

    epochs: int = Field(default=200, ge=1)
    batch_size: int = Field(default=15, ge=1)
    lr: float = Field(default=1e-4, gt=0.0)
    betas: tuple[float, float] = (0.5, 0.999)
    weights: Stage1Weights = Stage1Weights()
    augmentation: bool = True
    model: TranslationModelConfig = TranslationModelConfig()
    slice_axis: int = Field(default=0, ge=0, le=2)
    steps_per_epoch: int | None = Field(default=None, ge=1)
    seed: int = 0


class CycleOutputs(BaseModel):
    """Every tensor of one cycle pass plus the generator-side loss terms"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    x_S_prime: torch.Tensor
    x_S_cycled: torch.Tensor
    x_T_prime: torch.Tensor
    x_T_cycled: torch.Tensor
    y_S_hat: torch.Tensor
    y_S_prime_hat: torch.Tensor
    losses: dict[str, torch.Tensor]


class EpochLog(BaseModel):
    epoch: int
    L_adv_mod_D: float
    L_adv_mod_G: float
    L_cyc: float
    L_seg_mod: float
    wall_time_s: float


class Stage1Result(BaseModel):
    checkpoint: Path
    checkpoints: list[Path]
    log_path: Path
    history: list[EpochLog]
    validation: dict[str, float] = {}


class PseudoTargetDataset(BaseModel):
    """Source volumes rendered in the target modality, masks carried over unchanged"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    volumes: list[Volume]
    source_ids: dict[str, str]
    checkpoint_id: str

    @model_validator(mode="after")
    def validate_volumes(self) -> "PseudoTargetDataset":
        for v in self.volumes:
            if v.volume_id not in self.source_ids:
                raise ValueError(f"pseudo-target {v.volume_id} has no source volume")
            if v.modality != Modality.T:
                raise ValueError(f"pseudo-target {v.volume_id} is not in the target modality")
            if np.abs(v.data).max() > 1.0:
                raise ValueError(f"pseudo-target {v.volume_id} leaves [-1, 1]")
        return self

    def annotated(self) -> list[Volume]:
        return [v for v in self.volumes if v.mask is not None]
