"""
3D segmentation networks
========================

Encoder levels follow a channel/conv/attention schedule: convolutional stem
levels first, then levels of attention blocks. Between levels the feature
maps are resampled by 2x trilinear interpolation.

The semi-supervised model adds a common decoder (healthy image from c) and
a residual decoder whose body is the segmentation decoder itself: only the
normalization sets and the two output heads differ between the two modes.
"""
import torch
import torch.nn as nn
import torch.nn.functional as F

from core.exceptions import ModelConfigError
from nets.blocks import ConvBlock, TransformerBlock, from_tokens, to_tokens
from nets.discriminators import MultiScaleDiscriminator
from nets.entities import DecoderMode, LatentCode, SegmentationConfig, Variant

OUTPUT_HEAD = "output"


class Level(nn.Module):
    """Projection conv, optional extra convs, optional attention blocks"""

    def __init__(self, in_channels: int, out_channels: int, convs: int, trans: int, heads: int, dual: bool = False):
        super().__init__()
        self.convs = nn.ModuleList(
            ConvBlock(in_channels if i == 0 else out_channels, out_channels, spatial_dims=3, dual=dual)
            for i in range(max(1, convs))
        )
        self.blocks = nn.ModuleList(TransformerBlock(out_channels, heads, dual=dual) for _ in range(trans))

    def forward(self, x: torch.Tensor, mode: DecoderMode | None = None) -> torch.Tensor:
        for conv in self.convs:
            x = conv(x, mode)
        if self.blocks:
            spatial = tuple(x.shape[2:])
            tokens = to_tokens(x)
            for block in self.blocks:
                tokens = block(tokens, mode)
            x = from_tokens(tokens, spatial)
        return x


class Encoder3d(nn.Module):
    def __init__(self, cfg: SegmentationConfig):
        super().__init__()
        widths = cfg.encoder_widths
        self.levels = nn.ModuleList(
            Level(
                cfg.in_channels if i == 0 else widths[i - 1],
                widths[i],
                cfg.encoder_convs[i],
                cfg.encoder_trans[i],
                cfg.encoder_heads[i],
            )
            for i in range(len(widths))
        )

    def forward(self, x: torch.Tensor) -> list[torch.Tensor]:
        features = []
        for index, level in enumerate(self.levels):
            if index > 0:
                x = F.interpolate(x, scale_factor=0.5, mode="trilinear", align_corners=False)
            x = level(x)
            features.append(x)
        return features


class Decoder3d(nn.Module):
    """
    Decoder reading a bottleneck code plus encoder skips

    With `dual=True` every normalization layer holds one parameter set per
    DecoderMode and each mode has its own output head; everything else is
    shared between the modes.
    """

    def __init__(
        self,
        cfg: SegmentationConfig,
        code_channels: int,
        heads: dict[str, str],
        dual: bool = False,
    ):
        super().__init__()
        enc, dec = cfg.encoder_widths, cfg.decoder_widths
        self.dual = dual
        # the common decoder maps c back to the encoder output width
        self.project = nn.Conv3d(code_channels, enc[-1], kernel_size=1) if code_channels != enc[-1] else None
        in_widths = (enc[-1],) + dec[:-1]
        self.levels = nn.ModuleList(
            Level(
                in_widths[i] + enc[-2 - i],
                dec[i],
                cfg.decoder_convs[i],
                cfg.decoder_trans[i],
                cfg.decoder_heads[i],
                dual=dual,
            )
            for i in range(len(dec))
        )
        self.heads = nn.ModuleDict({name: nn.Conv3d(dec[-1], 1, kernel_size=1) for name in heads})
        self.activations = dict(heads)

    def body_parameters(self):
        """Named parameters outside the normalization sets and output heads"""
        for name, p in self.named_parameters():
            if not name.startswith("heads.") and ".norms." not in name:
                yield name, p

    def forward(
        self,
        code: torch.Tensor,
        skips: list[torch.Tensor],
        mode: DecoderMode | None = None,
    ) -> torch.Tensor:
        if self.dual and mode is None:
            raise ModelConfigError("the shared decoder needs an explicit mode")
        x = code if self.project is None else self.project(code)
        for level, skip in zip(self.levels, reversed(skips[:-1])):
            x = F.interpolate(x, size=skip.shape[2:], mode="trilinear", align_corners=False)
            x = level(torch.cat([x, skip], dim=1), mode)
        head = DecoderMode(mode).value if self.dual else OUTPUT_HEAD
        logits = self.heads[head](x)
        return torch.tanh(logits) if self.activations[head] == "tanh" else torch.sigmoid(logits)


SHARED_HEADS = {DecoderMode.RESIDUAL.value: "tanh", DecoderMode.SEGMENTATION.value: "sigmoid"}


class SegmentationModel(nn.Module):
    """
    Encoder E, segmentation decoder G_seg and, for the semi-supervised
    variant, common decoder G_com, residual decoder G_res and the two
    presence/absence discriminators
    """

    def __init__(self, cfg: SegmentationConfig):
        super().__init__()
        self.cfg = cfg
        self.variant = cfg.variant
        bottleneck = cfg.encoder_widths[-1]
        self.encoder = Encoder3d(cfg)

        if cfg.variant == Variant.SELF_SUPERVISED:
            self.seg_decoder = Decoder3d(cfg, bottleneck, {OUTPUT_HEAD: "sigmoid"})
            self.res_decoder = None
            self.common_decoder = None
            self.disc_A = None
            self.disc_P = None
            return

        self.seg_decoder = Decoder3d(cfg, bottleneck, SHARED_HEADS, dual=True)
        # ablation: an independent copy instead of the weight-shared body
        self.res_decoder = self.seg_decoder if cfg.shared_decoder else Decoder3d(cfg, bottleneck, SHARED_HEADS, dual=True)
        self.common_decoder = Decoder3d(cfg, cfg.common_channels, {OUTPUT_HEAD: "tanh"})
        disc_cfg = cfg.discriminator.model_copy(update={"dims": 3, "in_channels": cfg.in_channels, "input_size": cfg.input_dims})
        self.disc_A = MultiScaleDiscriminator(disc_cfg)
        self.disc_P = MultiScaleDiscriminator(disc_cfg)

    @property
    def is_semi(self) -> bool:
        return self.variant == Variant.SEMI_SUPERVISED

    def _check_input(self, x: torch.Tensor) -> None:
        factor = self.cfg.downsampling
        if x.ndim != 5 or any(s % factor for s in x.shape[2:]):
            raise ModelConfigError(
                f"segmentation input {tuple(x.shape)} must be (B, C, D, H, W) with sides divisible by {factor}"
            )

    def encode(self, x: torch.Tensor) -> list[torch.Tensor]:
        self._check_input(x)
        return self.encoder(x)

    def partition(self, bottleneck: torch.Tensor) -> LatentCode:
        split = self.cfg.common_channels
        return LatentCode(c=bottleneck[:, :split], u=bottleneck[:, split:])

    def segment_features(self, features: list[torch.Tensor]) -> torch.Tensor:
        mode = DecoderMode.SEGMENTATION if self.is_semi else None
        return self.seg_decoder(features[-1], features, mode)

    def residual(self, code: LatentCode, skips: list[torch.Tensor]) -> torch.Tensor:
        self._require_semi("residual decoder")
        return self.res_decoder(code.joined(), skips, DecoderMode.RESIDUAL)

    def common(self, code: LatentCode, skips: list[torch.Tensor]) -> torch.Tensor:
        self._require_semi("common decoder")
        return self.common_decoder(code.c, skips)

    def _require_semi(self, what: str) -> None:
        if not self.is_semi:
            raise ModelConfigError(f"the {self.variant.value} model has no {what}")

    def generator_parameters(self):
        for name, p in self.named_parameters():
            if not name.startswith(("disc_A.", "disc_P.")):
                yield p

    def discriminator_parameters(self):
        if self.is_semi:
            yield from self.disc_A.parameters()
            yield from self.disc_P.parameters()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.segment_features(self.encode(x))


def build_segmentation_model(cfg: SegmentationConfig) -> SegmentationModel:
    """
    Raises:
        ModelConfigError: channel schedule inconsistent with the variant or input dims
    """
    factor = cfg.downsampling
    if any(d % factor for d in cfg.input_dims):
        raise ModelConfigError(f"input dims {cfg.input_dims} are not divisible by {factor}")
    if cfg.variant == Variant.SEMI_SUPERVISED and cfg.encoder_widths[-1] < 2:
        raise ModelConfigError("the semi-supervised variant needs >= 2 bottleneck channels to split into c and u")
    return SegmentationModel(cfg)


def encode_partition(model: SegmentationModel, x: torch.Tensor) -> LatentCode:
    """Split the encoder bottleneck of `x` into common and unique codes"""
    return model.partition(model.encode(x)[-1])
