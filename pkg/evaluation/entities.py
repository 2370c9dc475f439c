"""
Entity models for evaluation results
"""
import numpy as np
from pydantic import BaseModel, ConfigDict, Field


class EvaluationConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    threshold: float = Field(default=0.5, gt=0.0, lt=1.0)
    attention_top: int = Field(default=5, ge=1)


class VolumeMetrics(BaseModel):
    volume_id: str
    dice: float = Field(ge=0.0, le=1.0)
    # None when either surface is empty
    assd: float | None = Field(default=None, ge=0.0)
    both_empty: bool = False


class EvalResult(BaseModel):
    """
    Per-volume metrics of one experiment

    Aggregates use the population standard deviation (ddof=0).
    """
    experiment: str
    per_volume: list[VolumeMetrics]
    metadata: dict = {}

    @property
    def dice_values(self) -> np.ndarray:
        return np.array([m.dice for m in self.per_volume], dtype=np.float64)

    @property
    def assd_values(self) -> np.ndarray:
        return np.array([m.assd for m in self.per_volume if m.assd is not None], dtype=np.float64)

    @property
    def dice_mean(self) -> float:
        return float(self.dice_values.mean()) if self.per_volume else float("nan")

    @property
    def dice_std(self) -> float:
        return float(self.dice_values.std()) if self.per_volume else float("nan")

    @property
    def assd_mean(self) -> float | None:
        values = self.assd_values
        return float(values.mean()) if values.size else None

    @property
    def assd_std(self) -> float | None:
        values = self.assd_values
        return float(values.std()) if values.size else None

    @property
    def assd_undefined(self) -> int:
        return sum(m.assd is None for m in self.per_volume)

    def summary(self) -> dict:
        return {
            "volumes": len(self.per_volume),
            "dice_mean": self.dice_mean,
            "dice_std": self.dice_std,
            "assd_mean": self.assd_mean,
            "assd_std": self.assd_std,
            "assd_undefined": self.assd_undefined,
            "both_empty": sum(m.both_empty for m in self.per_volume),
            "metadata": self.metadata,
        }
