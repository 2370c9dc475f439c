"""
2D translation generators
=========================

One encoder (conv downsampling + attention at the bottleneck) feeding two
U-shaped decoders through the same skip features: a translation decoder
with a tanh head and a segmentation decoder with a sigmoid head.
"""
import torch
import torch.nn as nn
import torch.nn.functional as F

from core.exceptions import ModelConfigError
from nets.blocks import ConvBlock, LEAKY_SLOPE, TransformerBlock, from_tokens, to_tokens
from nets.discriminators import MultiScaleDiscriminator
from nets.entities import GeneratorConfig, TranslationModelConfig


class Encoder2d(nn.Module):
    def __init__(self, cfg: GeneratorConfig):
        super().__init__()
        self.cfg = cfg
        widths = [cfg.base_channels * 2**level for level in range(cfg.depth + 1)]
        self.stem = ConvBlock(cfg.in_channels, widths[0], spatial_dims=2)
        self.down = nn.ModuleList(
            nn.Sequential(
                nn.Conv2d(widths[i], widths[i + 1], kernel_size=3, stride=2, padding=1),
                nn.GroupNorm(1, widths[i + 1]),
                nn.LeakyReLU(LEAKY_SLOPE),
            )
            for i in range(cfg.depth)
        )
        grid = [s // 2**cfg.depth for s in cfg.image_size]
        self.grid = tuple(grid)
        self.position = nn.Parameter(torch.zeros(1, widths[-1], *grid))
        nn.init.trunc_normal_(self.position, std=0.02)
        self.blocks = nn.ModuleList(
            TransformerBlock(widths[-1], cfg.attention_heads) for _ in range(cfg.attention_layers)
        )
        self.widths = widths

    def forward(self, x: torch.Tensor) -> list[torch.Tensor]:
        features = [self.stem(x)]
        for down in self.down:
            features.append(down(features[-1]))

        bottleneck = features[-1]
        spatial = tuple(bottleneck.shape[2:])
        position = self.position
        if spatial != self.grid:
            position = F.interpolate(position, size=spatial, mode="bilinear", align_corners=False)
        tokens = to_tokens(bottleneck + position)
        for block in self.blocks:
            tokens = block(tokens)
        features[-1] = from_tokens(tokens, spatial)
        return features


class Decoder2d(nn.Module):
    def __init__(self, widths: list[int], out_channels: int, activation):
        super().__init__()
        self.up = nn.ModuleList(
            nn.ConvTranspose2d(widths[i + 1], widths[i], kernel_size=2, stride=2)
            for i in reversed(range(len(widths) - 1))
        )
        self.fuse = nn.ModuleList(
            ConvBlock(2 * widths[i], widths[i], spatial_dims=2)
            for i in reversed(range(len(widths) - 1))
        )
        self.head = nn.Conv2d(widths[0], out_channels, kernel_size=1)
        self.activation = activation

    def forward(self, features: list[torch.Tensor]) -> torch.Tensor:
        x = features[-1]
        for up, fuse, skip in zip(self.up, self.fuse, reversed(features[:-1])):
            x = fuse(torch.cat([up(x), skip], dim=1))
        return self.activation(self.head(x))


class TranslationGenerator(nn.Module):
    """Encoder E with translation decoder G and segmentation decoder G_seg"""

    def __init__(self, cfg: GeneratorConfig):
        super().__init__()
        factor = 2**cfg.depth
        if any(s % factor for s in cfg.image_size):
            raise ModelConfigError(f"image size {cfg.image_size} is not divisible by {factor} (depth {cfg.depth})")
        self.cfg = cfg
        self.encoder = Encoder2d(cfg)
        self.translator = Decoder2d(self.encoder.widths, cfg.in_channels, torch.tanh)
        self.segmenter = Decoder2d(self.encoder.widths, 1, torch.sigmoid)

    def encode(self, x: torch.Tensor) -> list[torch.Tensor]:
        factor = 2**self.cfg.depth
        if x.ndim != 4 or any(s % factor for s in x.shape[2:]):
            raise ModelConfigError(
                f"generator input {tuple(x.shape)} must be (B, C, H, W) with H, W divisible by {factor}"
            )
        return self.encoder(x)

    def translate(self, features: list[torch.Tensor]) -> torch.Tensor:
        return self.translator(features)

    def segment(self, features: list[torch.Tensor]) -> torch.Tensor:
        return self.segmenter(features)

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        features = self.encode(x)
        return self.translate(features), self.segment(features)


class TranslationModel(nn.Module):
    """
    Both translation directions and both modality discriminators

    generator_st: E_S with G_T (S -> T) and G_seg^S
    generator_ts: E_T with G_S (T -> S) and G_seg^T
    """

    def __init__(
        self,
        generator_st: nn.Module,
        generator_ts: nn.Module,
        disc_S: nn.Module,
        disc_T: nn.Module,
    ):
        super().__init__()
        self.generator_st = generator_st
        self.generator_ts = generator_ts
        self.disc_S = disc_S
        self.disc_T = disc_T

    def generator_parameters(self):
        yield from self.generator_st.parameters()
        yield from self.generator_ts.parameters()

    def discriminator_parameters(self):
        yield from self.disc_S.parameters()
        yield from self.disc_T.parameters()


def build_translation_generator(cfg: GeneratorConfig) -> TranslationGenerator:
    return TranslationGenerator(cfg)


def build_translation_model(cfg: TranslationModelConfig) -> TranslationModel:
    disc_cfg = cfg.discriminator.model_copy(
        update={"in_channels": cfg.generator.in_channels, "input_size": cfg.generator.image_size}
    )
    return TranslationModel(
        generator_st=build_translation_generator(cfg.generator),
        generator_ts=build_translation_generator(cfg.generator),
        disc_S=MultiScaleDiscriminator(disc_cfg),
        disc_T=MultiScaleDiscriminator(disc_cfg),
    )
