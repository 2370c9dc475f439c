"""
Entity models for self-training
"""
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator


class SelfTrainingConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    enabled: bool = True
    iterations: int = Field(default=3, ge=1)
    epochs_per_iteration: int = Field(default=150, ge=1)
    alpha: float = Field(default=0.6, gt=0.0, lt=1.0)


class PseudoLabelSet(BaseModel):
    """Binary masks thresholded at `alpha` from the predictions of one checkpoint"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    iteration: int = Field(ge=0)
    alpha: float
    checkpoint_id: str
    masks: dict[str, np.ndarray]

    @field_validator("masks")
    @classmethod
    def validate_masks(cls, v: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
        for volume_id, mask in v.items():
            if not np.isin(mask, (0, 1)).all():
                raise ValueError(f"pseudo-label of {volume_id} is not binary")
        return {volume_id: mask.astype(np.uint8) for volume_id, mask in v.items()}

    @property
    def positive(self) -> int:
        """Volumes with at least one pseudo-labelled tumor voxel"""
        return sum(bool(m.any()) for m in self.masks.values())


class IterationMetrics(BaseModel):
    iteration: int
    checkpoint_in: str
    checkpoint_out: str
    labelled_volumes: int
    positive_volumes: int
    val_dice_before: float | None
    val_dice_after: float | None


class SelfTrainingResult(BaseModel):
    final_checkpoint: Path
    iterations: list[IterationMetrics]
    metrics_path: Path
