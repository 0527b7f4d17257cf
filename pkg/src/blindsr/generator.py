"""x4 upscaling generators.

Two variants share the same interface: ``star``, a deep
residual-in-residual dense network whose dense blocks add an extra
residual after every second convolution, and ``lite``, a compact
sub-pixel CNN built for throughput. Both optionally insert channel
dropout directly before the final output convolution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import Tensor, nn

VARIANTS = ("star", "lite")


@dataclass
class GeneratorConfig:
    variant: str = "star"
    in_channels: int = 3
    out_channels: int = 3
    base_features: int = 64
    num_blocks: int = 23          # star only
    growth_channels: int = 32     # star only
    residual_scale: float = 0.2
    upscale: int = 4
    dropout_prob: float = 0.0     # > 0 enables channel dropout ("+" variants)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown generator variant {self.variant!r}")
        if self.upscale != 4:
            raise ValueError("only the 4x upscale factor is supported")
        if not 0.0 < self.residual_scale <= 1.0:
            raise ValueError(f"residual_scale must be in (0, 1], got {self.residual_scale}")
        if not 0.0 <= self.dropout_prob < 1.0:
            raise ValueError(f"dropout_prob must be in [0, 1), got {self.dropout_prob}")


def pixel_shuffle(x: Tensor, r: int) -> Tensor:
    """Rearrange (N, C*r^2, h, w) to (N, C, r*h, r*w) without losing values."""
    if x.shape[1] % (r * r) != 0:
        raise ValueError(f"channel count {x.shape[1]} not divisible by r^2={r * r}")
    return F.pixel_shuffle(x, r)


class StarDenseBlock(nn.Module):
    """Five densely connected convolutions with residual adds every two layers.

    The outputs of layers 2 and 4 receive a scaled residual from two layers
    earlier (the block input, through a 1x1 width projection, and the
    layer-2 output respectively); the block output adds a scaled residual
    of its input. With all weights and biases zero the block is an exact
    identity map.
    """

    def __init__(self, features: int, growth: int, residual_scale: float = 0.2):
        super().__init__()
        self.residual_scale = residual_scale
        self.conv1 = nn.Conv2d(features, growth, 3, 1, 1)
        self.conv2 = nn.Conv2d(features + growth, growth, 3, 1, 1)
        self.conv3 = nn.Conv2d(features + 2 * growth, growth, 3, 1, 1)
        self.conv4 = nn.Conv2d(features + 3 * growth, growth, 3, 1, 1)
        self.conv5 = nn.Conv2d(features + 4 * growth, features, 3, 1, 1)
        # 1x1 projection so the block input can skip into the growth-width layer 2
        self.skip_proj = nn.Conv2d(features, growth, 1)
        self.lrelu = nn.LeakyReLU(0.2, inplace=True)

    def forward(self, x: Tensor) -> Tensor:
        s = self.residual_scale
        x1 = self.lrelu(self.conv1(x))
        x2 = self.lrelu(self.conv2(torch.cat((x, x1), 1)))
        x2 = x2 + s * self.skip_proj(x)
        x3 = self.lrelu(self.conv3(torch.cat((x, x1, x2), 1)))
        x4 = self.lrelu(self.conv4(torch.cat((x, x1, x2, x3), 1)))
        x4 = x4 + s * x2
        x5 = self.conv5(torch.cat((x, x1, x2, x3, x4), 1))
        return x + s * x5


class StarRRDB(nn.Module):
    """Three StarDenseBlocks in sequence with an outer scaled residual."""

    def __init__(self, features: int, growth: int, residual_scale: float = 0.2):
        super().__init__()
        self.residual_scale = residual_scale
        self.block1 = StarDenseBlock(features, growth, residual_scale)
        self.block2 = StarDenseBlock(features, growth, residual_scale)
        self.block3 = StarDenseBlock(features, growth, residual_scale)

    def forward(self, x: Tensor) -> Tensor:
        out = self.block3(self.block2(self.block1(x)))
        return x + self.residual_scale * out


class StarGenerator(nn.Module):
    """Deep x4 generator: shallow conv, StarRRDB trunk with global residual,
    two nearest-neighbor upsampling stages, two tail convs, optional dropout,
    output conv."""

    def __init__(self, cfg: GeneratorConfig):
        super().__init__()
        if cfg.variant != "star":
            raise ValueError("StarGenerator requires variant='star'")
        self.cfg = cfg
        nf, gc = cfg.base_features, cfg.growth_channels
        self.conv_first = nn.Conv2d(cfg.in_channels, nf, 3, 1, 1)
        self.body = nn.Sequential(*[
            StarRRDB(nf, gc, cfg.residual_scale) for _ in range(cfg.num_blocks)
        ])
        self.conv_body = nn.Conv2d(nf, nf, 3, 1, 1)
        self.conv_up1 = nn.Conv2d(nf, nf, 3, 1, 1)
        self.conv_up2 = nn.Conv2d(nf, nf, 3, 1, 1)
        self.conv_hr1 = nn.Conv2d(nf, nf, 3, 1, 1)
        self.conv_hr2 = nn.Conv2d(nf, nf, 3, 1, 1)
        self.dropout = nn.Dropout2d(cfg.dropout_prob) if cfg.dropout_prob > 0 else nn.Identity()
        self.conv_last = nn.Conv2d(nf, cfg.out_channels, 3, 1, 1)
        self.lrelu = nn.LeakyReLU(0.2, inplace=True)

    def forward(self, x: Tensor) -> Tensor:
        _check_input(x, self.cfg.in_channels)
        feat = self.conv_first(x)
        feat = feat + self.conv_body(self.body(feat))
        feat = self.lrelu(self.conv_up1(F.interpolate(feat, scale_factor=2, mode="nearest")))
        feat = self.lrelu(self.conv_up2(F.interpolate(feat, scale_factor=2, mode="nearest")))
        feat = self.lrelu(self.conv_hr1(feat))
        feat = self.lrelu(self.conv_hr2(feat))
        return self.conv_last(self.dropout(feat))


class LiteGenerator(nn.Module):
    """Compact x4 generator: feature extraction, a short stack of mapping
    convs, one conv to out_channels*16, pixel shuffle, optional dropout,
    output conv. All heavy computation runs at LR resolution."""

    NUM_MAPPING_LAYERS = 5

    def __init__(self, cfg: GeneratorConfig):
        super().__init__()
        if cfg.variant != "lite":
            raise ValueError("LiteGenerator requires variant='lite'")
        self.cfg = cfg
        nf = cfg.base_features
        r = cfg.upscale
        self.conv_first = nn.Conv2d(cfg.in_channels, nf, 5, 1, 2)
        self.mapping = nn.Sequential(*[
            layer
            for _ in range(self.NUM_MAPPING_LAYERS)
            for layer in (nn.Conv2d(nf, nf, 3, 1, 1), nn.LeakyReLU(0.2, inplace=True))
        ])
        self.conv_expand = nn.Conv2d(nf, cfg.out_channels * r * r, 3, 1, 1)
        self.dropout = nn.Dropout2d(cfg.dropout_prob) if cfg.dropout_prob > 0 else nn.Identity()
        self.conv_last = nn.Conv2d(cfg.out_channels, cfg.out_channels, 3, 1, 1)
        self.lrelu = nn.LeakyReLU(0.2, inplace=True)

    def forward(self, x: Tensor) -> Tensor:
        _check_input(x, self.cfg.in_channels)
        feat = self.lrelu(self.conv_first(x))
        feat = self.mapping(feat)
        feat = pixel_shuffle(self.conv_expand(feat), self.cfg.upscale)
        return self.conv_last(self.dropout(feat))


def _check_input(x: Tensor, channels: int):
    if x.ndim != 4 or x.shape[1] != channels:
        raise ValueError(f"expected (N, {channels}, h, w) input, got {tuple(x.shape)}")


def _init_conv_weights(module: nn.Module, generator: torch.Generator, scale: float):
    """Kaiming-style normal init drawn from an explicit torch generator so
    builds are reproducible; biases start at zero."""
    for m in module.modules():
        if isinstance(m, nn.Conv2d):
            fan_in = m.in_channels * m.kernel_size[0] * m.kernel_size[1]
            std = math.sqrt(2.0 / fan_in)
            with torch.no_grad():
                m.weight.copy_(torch.randn(m.weight.shape, generator=generator) * std * scale)
                if m.bias is not None:
                    m.bias.zero_()


def build_generator(cfg: GeneratorConfig, seed: int = 0) -> nn.Module:
    """Construct a generator with deterministic initial weights for a seed.

    The star trunk is initialized at a reduced scale (0.1), the usual
    recipe for stable deep residual-dense training.
    """
    g = torch.Generator().manual_seed(seed)
    if cfg.variant == "star":
        net = StarGenerator(cfg)
        _init_conv_weights(net, g, scale=1.0)
        _init_conv_weights(net.body, g, scale=0.1)
    else:
        net = LiteGenerator(cfg)
        _init_conv_weights(net, g, scale=1.0)
    return net


def apply_dropout_mode(gen: nn.Module, enabled: bool, prob: float) -> nn.Module:
    """Enable or disable channel dropout before the final output conv.

    Dropout acts only in training mode; evaluation forwards stay
    deterministic regardless of ``prob``.
    """
    if not 0.0 <= prob < 1.0:
        raise ValueError(f"dropout prob must be in [0, 1), got {prob}")
    gen.dropout = nn.Dropout2d(prob) if enabled and prob > 0 else nn.Identity()
    gen.cfg.dropout_prob = prob if enabled else 0.0
    return gen


def count_parameters(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())
