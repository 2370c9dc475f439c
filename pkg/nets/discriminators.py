"""
Multi-scale patch discriminators
"""
import torch
import torch.nn as nn
import torch.nn.functional as F

from core.exceptions import ModelConfigError
from nets.blocks import LEAKY_SLOPE
from nets.entities import DiscriminatorConfig


class PatchDiscriminator(nn.Module):
    """One scale: stride-1 conv, strided conv/norm/leaky-ReLU stages, 1x1 score conv"""

    def __init__(self, cfg: DiscriminatorConfig):
        super().__init__()
        conv = nn.Conv3d if cfg.dims == 3 else nn.Conv2d
        widths = cfg.channels

        layers: list[nn.Module] = [
            conv(cfg.in_channels, widths[0], kernel_size=4, stride=1, padding="same"),
            nn.LeakyReLU(LEAKY_SLOPE),
        ]
        in_channels = widths[0]
        for out_channels in widths[1:1 + cfg.n_strided]:
            layers += [
                conv(in_channels, out_channels, kernel_size=4, stride=2, padding=1),
                nn.GroupNorm(1, out_channels),
                nn.LeakyReLU(LEAKY_SLOPE),
            ]
            in_channels = out_channels
        layers.append(conv(in_channels, widths[-1], kernel_size=1))
        self.layers = nn.Sequential(*layers)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.layers(x)


class MultiScaleDiscriminator(nn.Module):
    """
    Patch discriminators applied to progressively average-pooled inputs

    `forward` returns one score map per scale; `score` is the mean over
    scales of each scale's mean score.
    """

    def __init__(self, cfg: DiscriminatorConfig):
        super().__init__()
        self.cfg = cfg
        check_receptive_field(cfg, cfg.input_size)
        self.scales = nn.ModuleList(PatchDiscriminator(cfg) for _ in range(cfg.num_scales))

    def _downsample(self, x: torch.Tensor) -> torch.Tensor:
        pool = F.avg_pool3d if self.cfg.dims == 3 else F.avg_pool2d
        return pool(x, kernel_size=2, stride=2)

    def forward(self, x: torch.Tensor) -> list[torch.Tensor]:
        check_receptive_field(self.cfg, tuple(x.shape[2:]))
        outputs = []
        for index, discriminator in enumerate(self.scales):
            if index > 0:
                x = self._downsample(x)
            outputs.append(discriminator(x))
        return outputs

    def score(self, x: torch.Tensor) -> torch.Tensor:
        return torch.stack([s.mean() for s in self(x)]).mean()


def check_receptive_field(cfg: DiscriminatorConfig, size: tuple[int, ...]) -> None:
    """
    Raises:
        ModelConfigError: the coarsest scale leaves less than one score voxel
    """
    if len(size) != cfg.dims:
        raise ModelConfigError(f"{cfg.dims}D discriminator got input of spatial size {size}")
    factor = 2 ** (cfg.num_scales - 1 + cfg.n_strided)
    if any(d // factor < 1 for d in size):
        raise ModelConfigError(
            f"input {size} is smaller than the discriminator receptive field: "
            f"{cfg.num_scales} scales x {cfg.n_strided} strided convs need every side >= {factor}"
        )


def build_discriminator(cfg: DiscriminatorConfig) -> MultiScaleDiscriminator:
    return MultiScaleDiscriminator(cfg)
