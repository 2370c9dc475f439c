"""
Building blocks shared by the 2D and 3D networks
"""
from typing import Literal

import torch
import torch.nn as nn
import torch.nn.functional as F

from core.exceptions import ModelConfigError
from nets.entities import DecoderMode

NormKind = Literal["group", "layer"]
LEAKY_SLOPE = 0.2


def _norm(kind: NormKind, channels: int) -> nn.Module:
    # GroupNorm with one group normalizes each sample over its whole feature map
    return nn.GroupNorm(1, channels) if kind == "group" else nn.LayerNorm(channels)


class Norm(nn.Module):
    """Single normalization set; the decoder mode is ignored"""

    def __init__(self, kind: NormKind, channels: int):
        super().__init__()
        self.norm = _norm(kind, channels)

    def forward(self, x: torch.Tensor, mode: DecoderMode | None = None) -> torch.Tensor:
        return self.norm(x)


class DualNorm(nn.Module):
    """One normalization set per decoder mode, selected explicitly on every call"""

    def __init__(self, kind: NormKind, channels: int):
        super().__init__()
        self.norms = nn.ModuleDict({mode.value: _norm(kind, channels) for mode in DecoderMode})

    def forward(self, x: torch.Tensor, mode: DecoderMode | None = None) -> torch.Tensor:
        if mode is None:
            raise ModelConfigError("a dual-normalized block needs an explicit decoder mode")
        return self.norms[DecoderMode(mode).value](x)


def make_norm(kind: NormKind, channels: int, dual: bool) -> nn.Module:
    return DualNorm(kind, channels) if dual else Norm(kind, channels)


class ConvBlock(nn.Module):
    """conv 3x3(x3) -> norm -> leaky ReLU"""

    def __init__(self, in_channels: int, out_channels: int, spatial_dims: int, dual: bool = False):
        super().__init__()
        conv = nn.Conv3d if spatial_dims == 3 else nn.Conv2d
        self.conv = conv(in_channels, out_channels, kernel_size=3, padding=1)
        self.norm = make_norm("group", out_channels, dual)

    def forward(self, x: torch.Tensor, mode: DecoderMode | None = None) -> torch.Tensor:
        return F.leaky_relu(self.norm(self.conv(x), mode), LEAKY_SLOPE)


class MultiHeadSelfAttention(nn.Module):
    """
    Multi-head self-attention over tokens of shape (B, N, C)

    Head width is channels // heads (at least 1), so any head count works.
    When `capture` is set the last attention weights are kept on the module.
    """

    def __init__(self, dim: int, heads: int):
        super().__init__()
        self.heads = heads
        self.head_dim = max(1, dim // heads)
        inner = heads * self.head_dim
        self.qkv = nn.Linear(dim, 3 * inner)
        self.proj = nn.Linear(inner, dim)
        self.scale = self.head_dim ** -0.5
        self.capture = False
        self.last_attention: torch.Tensor | None = None

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        batch, tokens, _ = x.shape
        qkv = self.qkv(x).reshape(batch, tokens, 3, self.heads, self.head_dim).permute(2, 0, 3, 1, 4)
        q, k, v = qkv[0], qkv[1], qkv[2]
        attention = torch.softmax((q @ k.transpose(-2, -1)) * self.scale, dim=-1)
        if self.capture:
            self.last_attention = attention.detach()
        out = (attention @ v).transpose(1, 2).reshape(batch, tokens, self.heads * self.head_dim)
        return self.proj(out)


class TransformerBlock(nn.Module):
    """Pre-norm attention + MLP on (B, N, C) tokens"""

    def __init__(self, dim: int, heads: int, dual: bool = False, mlp_ratio: int = 2):
        super().__init__()
        self.norm1 = make_norm("layer", dim, dual)
        self.attention = MultiHeadSelfAttention(dim, heads)
        self.norm2 = make_norm("layer", dim, dual)
        self.mlp = nn.Sequential(
            nn.Linear(dim, mlp_ratio * dim),
            nn.GELU(),
            nn.Linear(mlp_ratio * dim, dim),
        )

    def forward(self, x: torch.Tensor, mode: DecoderMode | None = None) -> torch.Tensor:
        x = x + self.attention(self.norm1(x, mode))
        return x + self.mlp(self.norm2(x, mode))


def to_tokens(x: torch.Tensor) -> torch.Tensor:
    """(B, C, *spatial) -> (B, N, C)"""
    return x.flatten(2).transpose(1, 2)


def from_tokens(tokens: torch.Tensor, spatial: tuple[int, ...]) -> torch.Tensor:
    """(B, N, C) -> (B, C, *spatial)"""
    return tokens.transpose(1, 2).reshape(tokens.shape[0], tokens.shape[2], *spatial)


def attention_modules(model: nn.Module) -> dict[str, MultiHeadSelfAttention]:
    return {name: m for name, m in model.named_modules() if isinstance(m, MultiHeadSelfAttention)}
