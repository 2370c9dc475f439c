"""
Entity models for network configuration and network outputs
"""
from enum import Enum
from typing import Literal

import torch
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

# patch discriminator widths: stride-1 conv, four strided convs, 1x1 score
DISCRIMINATOR_CHANNELS = (60, 60, 120, 240, 480, 1)


class Variant(str, Enum):
    """Stage-2 training variant"""
    SELF_SUPERVISED = "self_supervised"
    SEMI_SUPERVISED = "semi_supervised"


class DecoderMode(str, Enum):
    """Which normalization set and output head the shared decoder uses"""
    RESIDUAL = "residual"
    SEGMENTATION = "segmentation"


class GeneratorConfig(BaseModel):
    """2D U-shaped hybrid conv/attention generator with two decoders"""
    model_config = ConfigDict(extra="forbid")

    in_channels: int = Field(default=1, ge=1)
    base_channels: int = Field(default=16, ge=1)
    depth: int = Field(default=3, ge=1)
    attention_layers: int = Field(default=2, ge=0)
    attention_heads: int = Field(default=4, ge=1)
    image_size: tuple[int, int] = (32, 32)


class DiscriminatorConfig(BaseModel):
    """Multi-scale patch discriminator, 2D for translation and 3D for segmentation"""
    model_config = ConfigDict(extra="forbid")

    dims: Literal[2, 3] = 2
    in_channels: int = Field(default=1, ge=1)
    scale: float = Field(default=1.0, gt=0.0)
    num_scales: int = Field(default=2, ge=1)
    n_strided: int = Field(default=4, ge=1, le=4)
    input_size: tuple[int, ...] = (32, 32)

    @model_validator(mode="after")
    def validate_input_size(self) -> "DiscriminatorConfig":
        if len(self.input_size) != self.dims:
            raise ValueError(f"input_size {self.input_size} does not have {self.dims} dimensions")
        return self

    @property
    def channels(self) -> tuple[int, ...]:
        """Base widths scaled by `scale`; the score layer keeps one channel"""
        widths = [max(1, round(c * self.scale)) for c in DISCRIMINATOR_CHANNELS[:-1]]
        return (*widths, 1)


class TranslationModelConfig(BaseModel):
    """Both generators and both discriminators of the translation stage"""
    model_config = ConfigDict(extra="forbid")

    generator: GeneratorConfig = GeneratorConfig()
    discriminator: DiscriminatorConfig = DiscriminatorConfig(scale=0.25)


# default channel schedules per variant; encoder levels then decoder levels
SEMI_SUPERVISED_SCHEDULE = {
    "channels": (32, 64, 128, 256, 320),
    "decoder_channels": (256, 128, 64, 32),
}
SELF_SUPERVISED_SCHEDULE = {
    "channels": (16, 32, 64, 128, 256),
    "decoder_channels": (128, 64, 32, 16),
}


class SegmentationConfig(BaseModel):
    """
    3D hybrid convolution/attention encoder-decoder

    Channel schedules left unset follow the variant's default; `width`
    scales every channel count (heads keep their count, head width adapts).
    """
    model_config = ConfigDict(extra="forbid")

    variant: Variant = Variant.SEMI_SUPERVISED
    in_channels: int = Field(default=1, ge=1)
    channels: tuple[int, ...] | None = None
    encoder_convs: tuple[int, ...] = (1, 2, 0, 0, 0)
    encoder_trans: tuple[int, ...] = (0, 0, 2, 4, 6)
    encoder_heads: tuple[int, ...] = (0, 0, 2, 8, 10)
    decoder_channels: tuple[int, ...] | None = None
    decoder_convs: tuple[int, ...] = (0, 0, 2, 2)
    decoder_trans: tuple[int, ...] = (4, 2, 0, 0)
    decoder_heads: tuple[int, ...] = (8, 4, 0, 0)
    width: float = Field(default=1.0, gt=0.0)
    latent_ratio: float = Field(default=0.75, gt=0.0, lt=1.0)
    shared_decoder: bool = True
    input_dims: tuple[int, int, int] = (16, 32, 16)
    discriminator: DiscriminatorConfig = DiscriminatorConfig(
        dims=3, scale=0.25, num_scales=2, n_strided=3, input_size=(16, 32, 16)
    )

    @field_validator("input_dims")
    @classmethod
    def validate_input_dims(cls, v: tuple[int, int, int]) -> tuple[int, int, int]:
        if any(d < 1 for d in v):
            raise ValueError(f"input_dims must be positive, got {v}")
        return v

    @model_validator(mode="after")
    def validate_schedule(self) -> "SegmentationConfig":
        levels = len(self.encoder_channels)
        for name in ("encoder_convs", "encoder_trans", "encoder_heads"):
            if len(getattr(self, name)) != levels:
                raise ValueError(f"{name} needs {levels} entries, one per encoder level")
        for name in ("decoder_channel_schedule", "decoder_convs", "decoder_trans", "decoder_heads"):
            if len(getattr(self, name)) != levels - 1:
                raise ValueError(f"{name} needs {levels - 1} entries, one per decoder level")
        for trans, heads in zip(self.encoder_trans + self.decoder_trans, self.encoder_heads + self.decoder_heads):
            if trans > 0 and heads < 1:
                raise ValueError("every level with attention blocks needs at least one head")
        return self

    @property
    def schedule_defaults(self) -> dict:
        return SEMI_SUPERVISED_SCHEDULE if self.variant == Variant.SEMI_SUPERVISED else SELF_SUPERVISED_SCHEDULE

    @property
    def encoder_channels(self) -> tuple[int, ...]:
        return self.channels or self.schedule_defaults["channels"]

    @property
    def decoder_channel_schedule(self) -> tuple[int, ...]:
        return self.decoder_channels or self.schedule_defaults["decoder_channels"]

    @property
    def encoder_widths(self) -> tuple[int, ...]:
        return tuple(max(1, round(c * self.width)) for c in self.encoder_channels)

    @property
    def decoder_widths(self) -> tuple[int, ...]:
        return tuple(max(1, round(c * self.width)) for c in self.decoder_channel_schedule)

    @property
    def downsampling(self) -> int:
        return 2 ** (len(self.encoder_channels) - 1)

    @property
    def common_channels(self) -> int:
        """Channels of the common code c; the rest of the bottleneck is u"""
        bottleneck = self.encoder_widths[-1]
        return min(bottleneck - 1, max(1, round(self.latent_ratio * bottleneck)))

    def unique_code_shape(self, batch: int) -> tuple[int, ...]:
        """Shape of u for a batch of `input_dims` volumes"""
        spatial = tuple(d // self.downsampling for d in self.input_dims)
        return (batch, self.encoder_widths[-1] - self.common_channels, *spatial)


class LatentCode(BaseModel):
    """Bottleneck split into common (c) and unique (u) channels"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    c: torch.Tensor
    u: torch.Tensor | None = None

    def joined(self) -> torch.Tensor:
        if self.u is None:
            return self.c
        return torch.cat([self.c, self.u], dim=1)


class AttentionRecord(BaseModel):
    """Attention weights per attention layer, shape (batch, heads, queries, keys)"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    layers: dict[str, torch.Tensor]

    def heads(self) -> list[tuple[str, int]]:
        return [(name, h) for name, weights in self.layers.items() for h in range(weights.shape[1])]


class HeadConfidence(BaseModel):
    """Mean over queries of the maximal attention weight of one head"""
    layer: str
    head: int
    confidence: float
