"""
Entity models for loss weights
"""
import math

from pydantic import BaseModel, ConfigDict, Field, field_validator

from core.exceptions import LossCompositionError

STAGE1_TERMS = ("adv_mod", "seg_mod", "cyc")
STAGE2_TERMS = ("adv_gen", "rec", "lat", "seg_pT", "seg_st")

# lambda_seg^pT per share of annotated source volumes
SEG_PT_SCHEDULE: dict[float, float] = {1.0: 100.0, 0.7: 50.0, 0.4: 25.0, 0.1: 1.0, 0.01: 0.1}


class LossWeights(BaseModel):
    """Named non-negative loss coefficients"""
    model_config = ConfigDict(frozen=True)

    values: dict[str, float]

    @field_validator("values")
    @classmethod
    def validate_values(cls, v: dict[str, float]) -> dict[str, float]:
        negative = sorted(name for name, value in v.items() if value < 0 or not math.isfinite(value))
        if negative:
            raise ValueError(f"loss weights must be finite and >= 0: {negative}")
        return v

    def __getitem__(self, name: str) -> float:
        return self.values[name]

    def __contains__(self, name: str) -> bool:
        return name in self.values

    @property
    def total(self) -> float:
        return math.fsum(self.values.values())

    def restricted(self, names) -> "LossWeights":
        """Sub-map over `names` (not renormalized)"""
        return LossWeights(values={name: self.values[name] for name in names})


def normalize_weights(w: LossWeights) -> LossWeights:
    """
    Divide every weight by their sum

    Raises:
        LossCompositionError: no weight is positive
    """
    total = w.total
    if not w.values or total <= 0:
        raise LossCompositionError(f"cannot normalize all-zero loss weights {dict(w.values)}")
    return LossWeights(values={name: value / total for name, value in w.values.items()})


def seg_pt_weight_for(source_fraction: float) -> float:
    """Scheduled lambda_seg^pT for an annotated source fraction"""
    for fraction, weight in SEG_PT_SCHEDULE.items():
        if math.isclose(fraction, source_fraction, rel_tol=0.0, abs_tol=1e-9):
            return weight
    raise ValueError(
        f"no scheduled seg_pT weight for source fraction {source_fraction}; "
        f"use one of {sorted(SEG_PT_SCHEDULE)} or set the weight explicitly"
    )


class Stage1Weights(BaseModel):
    """Translation-stage coefficients (raw, normalized on use)"""
    model_config = ConfigDict(extra="forbid")

    adv_mod: float = Field(default=1.0, ge=0.0)
    seg_mod: float = Field(default=1.0, ge=0.0)
    cyc: float = Field(default=10.0, ge=0.0)

    def to_loss_weights(self) -> LossWeights:
        return normalize_weights(LossWeights(values=self.model_dump()))


class Stage2Weights(BaseModel):
    """
    Segmentation-stage coefficients

    `seg_pT` left unset is filled from the annotation schedule; `seg_st`
    left unset follows `seg_pT` so supervised and self-training terms balance.
    """
    model_config = ConfigDict(extra="forbid")

    adv_gen: float = Field(default=5.0, ge=0.0)
    rec: float = Field(default=50.0, ge=0.0)
    lat: float = Field(default=5.0, ge=0.0)
    seg_pT: float | None = Field(default=None, gt=0.0)
    seg_st: float | None = Field(default=None, ge=0.0)

    @classmethod
    def vestibular_schwannoma(cls, **overrides) -> "Stage2Weights":
        """Preset tuned for the vestibular schwannoma setting"""
        return cls(**{"adv_gen": 5.0, "rec": 75.0, "lat": 10.0, **overrides})

    def resolved(self, source_fraction: float) -> "Stage2Weights":
        seg_pt = self.seg_pT if self.seg_pT is not None else seg_pt_weight_for(source_fraction)
        seg_st = self.seg_st if self.seg_st is not None else seg_pt
        return self.model_copy(update={"seg_pT": seg_pt, "seg_st": seg_st})

    def to_loss_weights(self) -> LossWeights:
        """Raw map over every stage-2 term; segmentation losses renormalize per variant"""
        if self.seg_pT is None or self.seg_st is None:
            raise LossCompositionError("stage-2 weights are unresolved; call resolved() first")
        return LossWeights(values=self.model_dump())
