"""
Entity models for the segmentation stage
"""
from enum import Enum
from pathlib import Path

import torch
from pydantic import BaseModel, ConfigDict, Field

from losses.entities import Stage2Weights
from nets.entities import LatentCode, SegmentationConfig, Variant


class Supervision(str, Enum):
    """Where the supervised segmentation pool comes from"""
    PSEUDO_TARGET = "pseudo_target"
    SOURCE = "source"
    TARGET = "target"


class Ablation(BaseModel):
    """Switches for the presence/absence objective and decoder sharing"""
    model_config = ConfigDict(extra="forbid")

    presence_absence: bool = True
    absence_to_presence: bool = True
    shared_decoder: bool = True


class Stage2Config(BaseModel):
    """Segmentation training; optimizer settings match the translation stage"""
    model_config = ConfigDict(extra="forbid")

    variant: Variant = Variant.SEMI_SUPERVISED
    epochs: int = Field(default=300, ge=1)
    batch_size: int = Field(default=2, ge=1)
    lr: float = Field(default=1e-4, gt=0.0)
    betas: tuple[float, float] = (0.5, 0.999)
    weights: Stage2Weights = Stage2Weights()
    alpha: float = Field(default=0.6, gt=0.0, lt=1.0)
    val_fraction: float = Field(default=0.2, ge=0.0, lt=1.0)
    supervision: Supervision = Supervision.PSEUDO_TARGET
    ablation: Ablation = Ablation()
    model: SegmentationConfig = SegmentationConfig(width=0.25)
    strict: bool = True
    steps_per_epoch: int | None = Field(default=None, ge=1)
    seed: int = 0

    def model_cfg(self, input_dims: tuple[int, int, int] | None = None) -> SegmentationConfig:
        """Network config with the variant, sharing switch and input dims applied"""
        data = self.model.model_dump()
        data.update(variant=self.variant, shared_decoder=self.ablation.shared_decoder)
        if input_dims is not None:
            data["input_dims"] = input_dims
        return SegmentationConfig(**data)

    @property
    def uses_presence_absence(self) -> bool:
        return self.variant == Variant.SEMI_SUPERVISED and self.ablation.presence_absence

    @property
    def uses_absence_to_presence(self) -> bool:
        return self.uses_presence_absence and self.ablation.absence_to_presence


class PresenceToAbsence(BaseModel):
    """X_PA = G_com(c_P), delta = G_res(c_P, u_P), X_PP = X_PA + delta"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    x_PA: torch.Tensor
    delta: torch.Tensor
    x_PP: torch.Tensor
    code: LatentCode


class AbsenceToPresence(BaseModel):
    """X_AA = G_com(c_A), X_AP = X_AA + G_res(c_A, u); X_AP is None without u"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    x_AA: torch.Tensor
    x_AP: torch.Tensor | None = None
    delta: torch.Tensor | None = None
    code: LatentCode


class Stage2EpochLog(BaseModel):
    epoch: int
    L_adv_gen_D: float | None = None
    L_adv_gen_G: float | None = None
    L_rec: float | None = None
    L_lat: float | None = None
    L_seg_pT: float
    L_seg_st: float | None = None
    val_dice: float | None = None


class StepRecord(BaseModel):
    """Seed parts and moments of the prior sample drawn at one step"""
    epoch: int
    step: int
    u_seed: str
    u_mean: float
    u_std: float


class Stage2Result(BaseModel):
    checkpoint: Path
    best_checkpoint: Path
    best_val_dice: float | None
    log_path: Path
    history: list[Stage2EpochLog]
    initial_val_dice: float | None = None
