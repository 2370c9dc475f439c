"""
Entity models for phantom volumes
"""
from enum import Enum
from typing import Annotated

import numpy as np
from pydantic import AfterValidator, BaseModel, ConfigDict, Field, field_validator, model_validator


class Modality(str, Enum):
    """Imaging modality: S is annotated (source), T is the adaptation target"""
    S = "S"
    T = "T"


class APLabel(str, Enum):
    """Image-level weak label: tumor Absent / Present"""
    A = "A"
    P = "P"
    UNKNOWN = "unknown"


def _as_float32(spacing: tuple[float, float, float]) -> tuple[float, float, float]:
    return tuple(float(np.float32(s)) for s in spacing)


# stored as f32 on disk, so only f32-representable values survive a save/load cycle
Spacing = Annotated[
    tuple[
        Annotated[float, Field(gt=0)],
        Annotated[float, Field(gt=0)],
        Annotated[float, Field(gt=0)],
    ],
    AfterValidator(_as_float32),
]


class Volume(BaseModel):
    """3D scalar grid with optional whole-tumor mask"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    volume_id: str
    data: np.ndarray
    spacing: Spacing = (1.0, 1.0, 1.0)
    modality: Modality
    mask: np.ndarray | None = None
    ap_label: APLabel = APLabel.UNKNOWN

    @field_validator("data")
    @classmethod
    def validate_data(cls, v: np.ndarray) -> np.ndarray:
        if v.ndim != 3:
            raise ValueError(f"volume data must be 3D, got shape {v.shape}")
        if v.size == 0:
            raise ValueError("volume data is empty")
        return np.ascontiguousarray(v, dtype=np.float32)

    @field_validator("mask")
    @classmethod
    def validate_mask(cls, v: np.ndarray | None) -> np.ndarray | None:
        if v is None:
            return None
        if not np.isin(v, (0, 1)).all():
            raise ValueError("mask values must be in {0, 1}")
        return np.ascontiguousarray(v, dtype=np.uint8)

    @model_validator(mode="after")
    def validate_mask_dims(self) -> "Volume":
        if self.mask is not None and self.mask.shape != self.data.shape:
            raise ValueError(
                f"mask dims {self.mask.shape} differ from data dims {self.data.shape}"
            )
        return self

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(int(d) for d in self.data.shape)

    @property
    def has_tumor(self) -> bool:
        return self.mask is not None and bool(self.mask.any())

    def same_as(self, other: "Volume") -> bool:
        """Field-wise equality (arrays compared bitwise)"""
        if (self.volume_id, self.spacing, self.modality, self.ap_label) != (
            other.volume_id, other.spacing, other.modality, other.ap_label
        ):
            return False
        if not np.array_equal(self.data, other.data):
            return False
        if (self.mask is None) != (other.mask is None):
            return False
        return self.mask is None or np.array_equal(self.mask, other.mask)


def label_from_mask(mask: np.ndarray | None) -> APLabel:
    """P iff the mask contains at least one tumor voxel"""
    if mask is None:
        return APLabel.UNKNOWN
    return APLabel.P if mask.any() else APLabel.A


class TransferMap(BaseModel):
    """Monotone piecewise-linear intensity map applied to the anatomy field"""
    model_config = ConfigDict(extra="forbid")

    knots_in: list[float]
    knots_out: list[float]

    @model_validator(mode="after")
    def validate_monotone(self) -> "TransferMap":
        if len(self.knots_in) < 2 or len(self.knots_in) != len(self.knots_out):
            raise ValueError("transfer map needs at least two (in, out) knots of equal count")
        if np.any(np.diff(self.knots_in) <= 0):
            raise ValueError("transfer map inputs must be strictly increasing")
        if np.any(np.diff(self.knots_out) < 0):
            raise ValueError("transfer map outputs must be non-decreasing")
        return self

    def apply(self, x: np.ndarray) -> np.ndarray:
        return np.interp(x, self.knots_in, self.knots_out)


class PhantomConfig(BaseModel):
    """Procedural bi-modal phantom dataset description"""
    model_config = ConfigDict(extra="forbid")

    volume_count: int = Field(default=200, ge=2)
    dims: tuple[int, int, int] = (16, 32, 32)
    spacing: Spacing = (1.0, 1.0, 1.0)
    tumor_probability: float = Field(default=0.7, ge=0.0, le=1.0)
    tumor_radius_range: tuple[float, float] = (2.5, 5.0)
    max_blobs: int = Field(default=3, ge=1)
    # both maps are monotone in the anatomy field; T compresses the bright range
    modality_transfer_S: TransferMap = TransferMap(knots_in=[0.0, 0.5, 1.0], knots_out=[0.15, 0.35, 0.6])
    modality_transfer_T: TransferMap = TransferMap(knots_in=[0.0, 0.5, 1.0], knots_out=[0.3, 0.7, 0.8])
    # tumors are hyper-intense in S and hypo-intense in T
    tumor_contrast_S: float = 0.45
    tumor_contrast_T: float = -0.35
    noise_sigma: float = Field(default=0.02, ge=0.0)
    source_share: float = Field(default=0.5, gt=0.0, lt=1.0)
    seed: int = 0

    @field_validator("dims")
    @classmethod
    def validate_dims(cls, v: tuple[int, int, int]) -> tuple[int, int, int]:
        if any(d < 8 for d in v):
            raise ValueError(f"every phantom dimension must be >= 8, got {v}")
        return v

    @field_validator("tumor_radius_range")
    @classmethod
    def validate_radius_range(cls, v: tuple[float, float]) -> tuple[float, float]:
        if v[0] <= 0 or v[0] > v[1]:
            raise ValueError(f"tumor_radius_range must satisfy 0 < min <= max, got {v}")
        return v

    def transfer_for(self, modality: Modality) -> TransferMap:
        return self.modality_transfer_S if modality == Modality.S else self.modality_transfer_T

    def contrast_for(self, modality: Modality) -> float:
        return self.tumor_contrast_S if modality == Modality.S else self.tumor_contrast_T


class PhantomDataset(BaseModel):
    """Unpaired split: every generated volume lives in exactly one modality"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    source: list[Volume]
    target: list[Volume]

    @property
    def volumes(self) -> list[Volume]:
        return sorted(self.source + self.target, key=lambda v: v.volume_id)


class SliceStack(BaseModel):
    """Ordered 2D slices of one volume along one axis"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    slices: list[np.ndarray]
    mask_slices: list[np.ndarray] | None = None
    source_volume_id: str
    axis: int = Field(ge=0, le=2)
    spacing: Spacing = (1.0, 1.0, 1.0)
    modality: Modality
    ap_label: APLabel = APLabel.UNKNOWN

    @model_validator(mode="after")
    def validate_slices(self) -> "SliceStack":
        if not self.slices:
            raise ValueError("slice stack is empty")
        shape = self.slices[0].shape
        if any(s.shape != shape for s in self.slices):
            raise ValueError("all slices must share one shape")
        if self.mask_slices is not None and len(self.mask_slices) != len(self.slices):
            raise ValueError("mask slice count differs from image slice count")
        return self


class SplitConfig(BaseModel):
    """Per-modality train/val/test split fractions"""
    model_config = ConfigDict(extra="forbid")

    val_fraction: float = Field(default=0.1, ge=0.0, lt=1.0)
    test_fraction: float = Field(default=0.2, ge=0.0, lt=1.0)

    @model_validator(mode="after")
    def validate_sum(self) -> "SplitConfig":
        if self.val_fraction + self.test_fraction >= 1.0:
            raise ValueError("val_fraction + test_fraction must leave training volumes")
        return self


class AnnotationConfig(BaseModel):
    """Share of volumes whose masks may be used as pixel-level annotations"""
    model_config = ConfigDict(extra="forbid")

    source_fraction: float = Field(default=1.0, gt=0.0, le=1.0)
    target_fraction: float = Field(default=0.0, ge=0.0, le=1.0)
