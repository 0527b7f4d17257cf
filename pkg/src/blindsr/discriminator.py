"""Attention U-Net discriminators with spectral normalization.

A single discriminator maps an image to a per-pixel logit map of the
same spatial size; skip features pass through additive attention gates
before being concatenated into the decoder. The multi-scale wrapper
runs two independent copies, one on the original image and one on a
2x bilinear-downsampled copy.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import Tensor, nn


@dataclass
class DiscriminatorConfig:
    base_features: int = 64
    depth: int = 3
    spectral_norm: bool = True
    scales: int = 2

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError(f"depth must be >= 1, got {self.depth}")
        if self.scales != 2:
            raise ValueError("the multi-scale wrapper uses exactly 2 scales")


def spectral_normalize(weight: Tensor, state: tuple[Tensor, Tensor] | None = None,
                       n_iters: int = 1, eps: float = 1e-12):
    """Divide a weight by its largest-singular-value estimate.

    The estimate is maintained by power iteration: ``state`` holds the
    left/right singular vector estimates and is advanced ``n_iters`` steps
    per call. Repeated calls on a fixed weight converge so the returned
    matrix has top singular value 1.

    Args:
        weight: parameter tensor; tensors with more than 2 dims are
            flattened to (out_features, rest).
        state: (u, v) vectors from the previous call, or None to start.
        n_iters: power-iteration steps to run this call.

    Returns:
        (normalized weight with the original shape, new (u, v) state)
    """
    w = weight.reshape(weight.shape[0], -1)
    if state is None:
        u = torch.randn(w.shape[0], dtype=w.dtype, device=w.device,
                        generator=torch.Generator(device=w.device).manual_seed(0))
        u = F.normalize(u, dim=0, eps=eps)
    else:
        u = state[0]
    v = None
    with torch.no_grad():
        for _ in range(max(1, n_iters)):
            v = F.normalize(w.t() @ u, dim=0, eps=eps)
            u = F.normalize(w @ v, dim=0, eps=eps)
    sigma = torch.dot(u, w @ v)
    return (weight / sigma).reshape(weight.shape), (u, v)


class SNConv2d(nn.Module):
    """Conv2d whose weight is spectrally normalized at every forward.

    The power-iteration vectors advance only in training mode, mirroring
    the usual GAN practice; evaluation reuses the latest estimate.
    """

    def __init__(self, in_ch, out_ch, kernel_size, stride=1, padding=0, bias=True):
        super().__init__()
        self.conv = nn.Conv2d(in_ch, out_ch, kernel_size, stride, padding, bias=bias)
        u = F.normalize(torch.randn(out_ch), dim=0)
        self.register_buffer("weight_u", u)

    def normalized_weight(self) -> Tensor:
        w = self.conv.weight
        mat = w.reshape(w.shape[0], -1)
        u = self.weight_u
        with torch.no_grad():
            v = F.normalize(mat.t() @ u, dim=0)
            u = F.normalize(mat @ v, dim=0)
            if self.training:
                self.weight_u.copy_(u)
        sigma = torch.dot(u, mat @ v)
        return w / sigma

    def forward(self, x: Tensor) -> Tensor:
        return F.conv2d(x, self.normalized_weight(), self.conv.bias,
                        self.conv.stride, self.conv.padding)


def _conv(in_ch, out_ch, k, s, p, use_sn):
    return SNConv2d(in_ch, out_ch, k, s, p) if use_sn else nn.Conv2d(in_ch, out_ch, k, s, p)


class AttentionGate(nn.Module):
    """Additive attention over skip features.

    The gating signal and skip features are projected by 1x1 convs,
    combined, rectified, and squeezed to a single-channel sigmoid map of
    coefficients in [0, 1] that multiplies the skip features.
    """

    def __init__(self, gate_ch: int, skip_ch: int, inter_ch: int):
        super().__init__()
        self.proj_gate = nn.Conv2d(gate_ch, inter_ch, 1)
        self.proj_skip = nn.Conv2d(skip_ch, inter_ch, 1)
        self.psi = nn.Conv2d(inter_ch, 1, 1)

    def forward(self, gate: Tensor, skip: Tensor) -> tuple[Tensor, Tensor]:
        alpha = torch.sigmoid(self.psi(F.relu(self.proj_gate(gate) + self.proj_skip(skip))))
        return skip * alpha, alpha


class AttentionUNetDiscriminator(nn.Module):
    """U-Net discriminator returning a full-resolution logit map."""

    def __init__(self, cfg: DiscriminatorConfig | None = None):
        super().__init__()
        cfg = cfg or DiscriminatorConfig()
        self.cfg = cfg
        nf, depth, sn = cfg.base_features, cfg.depth, cfg.spectral_norm
        feats = [nf * (2 ** i) for i in range(depth + 1)]

        self.conv_in = nn.Conv2d(3, feats[0], 3, 1, 1)
        self.down = nn.ModuleList([
            _conv(feats[i], feats[i + 1], 4, 2, 1, sn) for i in range(depth)
        ])
        self.gates = nn.ModuleList([
            AttentionGate(feats[i + 1], feats[i], max(feats[i] // 2, 1))
            for i in reversed(range(depth))
        ])
        self.up = nn.ModuleList([
            _conv(feats[i + 1] + feats[i], feats[i], 3, 1, 1, sn)
            for i in reversed(range(depth))
        ])
        self.tail1 = _conv(feats[0], feats[0], 3, 1, 1, sn)
        self.tail2 = _conv(feats[0], feats[0], 3, 1, 1, sn)
        self.conv_out = nn.Conv2d(feats[0], 1, 3, 1, 1)
        self.lrelu = nn.LeakyReLU(0.2, inplace=True)

    def forward(self, x: Tensor, return_attention: bool = False):
        depth = self.cfg.depth
        div = 2 ** depth
        if x.shape[-2] % div or x.shape[-1] % div:
            raise ValueError(
                f"spatial dims must be divisible by 2^depth={div}, got {tuple(x.shape[-2:])}")
        skips = [self.lrelu(self.conv_in(x))]
        for conv in self.down:
            skips.append(self.lrelu(conv(skips[-1])))
        feat = skips.pop()
        alphas = []
        for gate, conv in zip(self.gates, self.up):
            feat = F.interpolate(feat, scale_factor=2, mode="bilinear", align_corners=False)
            gated, alpha = gate(feat, skips.pop())
            alphas.append(alpha)
            feat = self.lrelu(conv(torch.cat((feat, gated), 1)))
        feat = self.lrelu(self.tail1(feat))
        feat = self.lrelu(self.tail2(feat))
        logits = self.conv_out(feat)
        if return_attention:
            return logits, alphas
        return logits


class MultiScaleDiscriminator(nn.Module):
    """Two identical-architecture discriminators with independent weights:
    one sees the image at full scale, the other a 2x-downsampled copy."""

    def __init__(self, cfg: DiscriminatorConfig | None = None):
        super().__init__()
        cfg = cfg or DiscriminatorConfig()
        self.cfg = cfg
        self.d_normal = AttentionUNetDiscriminator(cfg)
        self.d_sampled = AttentionUNetDiscriminator(cfg)

    def forward(self, x: Tensor) -> tuple[Tensor, Tensor]:
        div = 2 ** (self.cfg.depth + 1)
        if x.shape[-2] % div or x.shape[-1] % div:
            raise ValueError(
                f"spatial dims must be divisible by 2^(depth+1)={div}, got {tuple(x.shape[-2:])}")
        half = F.interpolate(x, scale_factor=0.5, mode="bilinear",
                             align_corners=False, antialias=True)
        return self.d_normal(x), self.d_sampled(half)


def build_discriminator(cfg: DiscriminatorConfig | None = None,
                        seed: int = 0) -> MultiScaleDiscriminator:
    """Multi-scale discriminator with deterministic initial weights."""
    g = torch.Generator().manual_seed(seed)
    net = MultiScaleDiscriminator(cfg)
    for m in net.modules():
        if isinstance(m, nn.Conv2d):
            fan_in = m.in_channels * m.kernel_size[0] * m.kernel_size[1]
            std = (2.0 / fan_in) ** 0.5
            with torch.no_grad():
                m.weight.copy_(torch.randn(m.weight.shape, generator=g) * std)
                if m.bias is not None:
                    m.bias.zero_()
    return net
