"""Training objective: adversarial, content and dual perceptual losses.

The adversarial terms are per-pixel binary cross-entropy over the
discriminators' logit maps, mean-reduced so magnitudes stay comparable
across resolutions. The perceptual term combines a VGG-style feature
distance (taps before activation) and a ResNet-style one (taps after
activation), with the ResNet side weighted dynamically by the ratio of
the two losses; that ratio acts as a constant during backpropagation,
scaling but never redirecting parameter updates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import Tensor, nn

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


@dataclass
class LossWeights:
    """Coefficients of the full objective.

    ``lambda_content``/``eta_adversarial``/``gamma_perceptual`` weight the
    generator total; ``lambda1``/``lambda2`` weight the full- and
    half-scale discriminators; ``mu`` and ``c`` shape the dynamic
    perceptual weighting.
    """

    lambda_content: float = 1.0
    eta_adversarial: float = 0.1
    gamma_perceptual: float = 1.0
    lambda1: float = 1.0
    lambda2: float = 1.0
    mu: float = 1.0
    c: float = 1e-8

    def __post_init__(self):
        if self.mu == 0:
            raise ValueError("mu must be nonzero")
        if self.c <= 0:
            raise ValueError("c must be a small positive constant")
        for name in ("lambda_content", "eta_adversarial", "gamma_perceptual",
                     "lambda1", "lambda2", "mu", "c"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")


class FeatureExtractor(nn.Module):
    """Frozen feature backbone with weighted tap points.

    ``stages[i]`` maps the previous stage's output to tap ``i``; taps are
    compared with an L1 distance weighted by ``tap_weights``. Parameters
    never receive gradients and the module is pinned to eval mode.
    """

    def __init__(self, kind: str, stages: list[nn.Module], tap_weights: list[float],
                 input_mean=None, input_std=None):
        super().__init__()
        if len(stages) != len(tap_weights):
            raise ValueError("one tap weight per stage required")
        self.kind = kind
        self.stages = nn.ModuleList(stages)
        self.tap_weights = list(tap_weights)
        mean = torch.tensor(input_mean if input_mean is not None else (0.0, 0.0, 0.0))
        std = torch.tensor(input_std if input_std is not None else (1.0, 1.0, 1.0))
        self.register_buffer("input_mean", mean.view(1, -1, 1, 1))
        self.register_buffer("input_std", std.view(1, -1, 1, 1))
        for p in self.parameters():
            p.requires_grad_(False)
        super().train(False)

    def train(self, mode: bool = True):
        # frozen: ignore requests to enter training mode
        return super().train(False)

    def forward(self, x: Tensor) -> list[Tensor]:
        feat = (x - self.input_mean) / self.input_std
        taps = []
        for stage in self.stages:
            feat = stage(feat)
            taps.append(feat)
        return taps


def build_tiny_extractor(kind: str = "vgg-style", seed: int = 0,
                         channels: int = 8) -> FeatureExtractor:
    """Small fixed-seed random extractor for tests and offline runs.

    Mirrors the tap conventions of the full backbones: vgg-style taps sit
    before the activation, resnet-style taps after it.
    """
    g = torch.Generator().manual_seed(seed)
    convs = [nn.Conv2d(3, channels, 3, 1, 1), nn.Conv2d(channels, channels, 3, 1, 1)]
    for conv in convs:
        fan_in = conv.in_channels * 9
        with torch.no_grad():
            conv.weight.copy_(torch.randn(conv.weight.shape, generator=g) * (2.0 / fan_in) ** 0.5)
            conv.bias.copy_(torch.randn(conv.bias.shape, generator=g) * 0.01)
    if kind == "vgg-style":
        stages = [nn.Sequential(convs[0]), nn.Sequential(nn.ReLU(), convs[1])]
    elif kind == "resnet-style":
        stages = [nn.Sequential(convs[0], nn.ReLU()), nn.Sequential(convs[1], nn.ReLU())]
    else:
        raise ValueError(f"unknown extractor kind {kind!r}")
    return FeatureExtractor(kind, stages, [1.0, 1.0])


def build_vgg_extractor(pretrained: bool = False, seed: int = 0) -> FeatureExtractor:
    """VGG19 extractor tapping the conv output before each of the five
    pooling stages (pre-activation), weights [0.1, 0.1, 1, 1, 1].

    ``pretrained=True`` loads the classification weights (downloads on
    first use); otherwise weights are seeded at random, which keeps the
    loss mechanics testable offline.
    """
    from torchvision.models import vgg19
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        features = vgg19(weights="DEFAULT" if pretrained else None).features
    cuts = [(0, 3), (3, 8), (8, 17), (17, 26), (26, 35)]
    stages = [nn.Sequential(*[features[i] for i in range(a, b)]) for a, b in cuts]
    return FeatureExtractor("vgg-style", stages, [0.1, 0.1, 1.0, 1.0, 1.0],
                            IMAGENET_MEAN, IMAGENET_STD)


def build_resnet_extractor(pretrained: bool = False, seed: int = 0) -> FeatureExtractor:
    """ResNet-50 extractor tapping the last bottleneck output of each of
    the four stages (post-activation), equal weights."""
    from torchvision.models import resnet50
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        net = resnet50(weights="DEFAULT" if pretrained else None)
    stem = nn.Sequential(net.conv1, net.bn1, net.relu, net.maxpool)
    stages = [nn.Sequential(stem, net.layer1), net.layer2, net.layer3, net.layer4]
    return FeatureExtractor("resnet-style", stages, [1.0, 1.0, 1.0, 1.0],
                            IMAGENET_MEAN, IMAGENET_STD)


def _check_same_shape(a: Tensor, b: Tensor):
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")


def discriminator_loss(logits_real: Tensor, logits_fake: Tensor) -> Tensor:
    """Per-pixel BCE of one discriminator: real map against 1, fake map
    against 0, mean-reduced over the logit maps."""
    _check_same_shape(logits_real, logits_fake)
    real = F.binary_cross_entropy_with_logits(logits_real, torch.ones_like(logits_real))
    fake = F.binary_cross_entropy_with_logits(logits_fake, torch.zeros_like(logits_fake))
    return real + fake


def total_discriminator_loss(loss_normal, loss_sampled, w: LossWeights):
    """Weighted sum of the two scales' discriminator losses."""
    return w.lambda1 * loss_normal + w.lambda2 * loss_sampled


def generator_adversarial_loss(logits_fake_normal: Tensor, logits_fake_sampled: Tensor,
                               w: LossWeights) -> Tensor:
    """Non-saturating adversarial loss: fake logits scored against target 1
    at both scales, combined with the per-scale weights."""
    ln = F.binary_cross_entropy_with_logits(
        logits_fake_normal, torch.ones_like(logits_fake_normal))
    ls = F.binary_cross_entropy_with_logits(
        logits_fake_sampled, torch.ones_like(logits_fake_sampled))
    return w.lambda1 * ln + w.lambda2 * ls


def content_loss(sr: Tensor, hr: Tensor) -> Tensor:
    """Mean absolute (pixel-wise 1-norm) distance."""
    _check_same_shape(sr, hr)
    return (sr - hr).abs().mean()


def perceptual_loss(sr: Tensor, hr: Tensor, extractor: FeatureExtractor) -> Tensor:
    """Weighted sum over tap points of the mean absolute feature distance."""
    _check_same_shape(sr, hr)
    taps_sr = extractor(sr)
    taps_hr = extractor(hr)
    total = sr.new_zeros(())
    for weight, fs, fh in zip(extractor.tap_weights, taps_sr, taps_hr):
        total = total + weight * (fs - fh).abs().mean()
    return total


def dual_perceptual_loss(l_vgg, l_res, w: LossWeights):
    """Combine the two perceptual losses with dynamic weighting.

    Returns ``l_vgg + (1/mu) * zeta * l_res`` where
    ``zeta = (l_vgg + c) / (l_res + c)``. Zeta is treated as a constant
    weight: gradients flow through the raw loss terms only.
    """
    zeta = (l_vgg + w.c) / (l_res + w.c)
    if torch.is_tensor(zeta):
        zeta = zeta.detach()
    return l_vgg + (1.0 / w.mu) * zeta * l_res


def total_generator_loss(content, adversarial, dual_perceptual, w: LossWeights):
    """Full generator objective: weighted sum of the three terms."""
    return (w.lambda_content * content
            + w.eta_adversarial * adversarial
            + w.gamma_perceptual * dual_perceptual)
