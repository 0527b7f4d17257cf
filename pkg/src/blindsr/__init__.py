"""Blind super-resolution toolkit.

Degradation synthesis, x4 GAN generators (full-size and lite), attention
U-Net discriminators, a two-phase training loop, and an evaluation and
benchmarking harness with a command-line front end.
"""

from .degradation import (BlurKernel, DegradationRecipe, DegradationSpace,
                          LevelParams, StageParams, apply_recipe, degrade,
                          default_space, sample_recipe)
from .discriminator import (AttentionUNetDiscriminator, DiscriminatorConfig,
                            MultiScaleDiscriminator, build_discriminator,
                            spectral_normalize)
from .evaluation import (BenchmarkLadder, MetricsReport, benchmark,
                         desk_ladder, evaluate_dataset, full_ladder, psnr,
                         ssim, super_resolve)
from .generator import (GeneratorConfig, LiteGenerator, StarDenseBlock,
                        StarGenerator, StarRRDB, apply_dropout_mode,
                        build_generator, pixel_shuffle)
from .losses import (FeatureExtractor, LossWeights, build_resnet_extractor,
                     build_tiny_extractor, build_vgg_extractor, content_loss,
                     discriminator_loss, dual_perceptual_loss,
                     generator_adversarial_loss, perceptual_loss,
                     total_discriminator_loss, total_generator_loss)
from .training import (Ema, TrainConfig, Trainer, ema_update,
                       load_generator_from_checkpoint, make_batch)

__version__ = "0.1.0"

__all__ = [
    "BlurKernel", "DegradationRecipe", "DegradationSpace", "LevelParams",
    "StageParams", "apply_recipe", "degrade", "default_space", "sample_recipe",
    "AttentionUNetDiscriminator", "DiscriminatorConfig", "MultiScaleDiscriminator",
    "build_discriminator", "spectral_normalize",
    "BenchmarkLadder", "MetricsReport", "benchmark", "desk_ladder",
    "evaluate_dataset", "full_ladder", "psnr", "ssim", "super_resolve",
    "GeneratorConfig", "LiteGenerator", "StarDenseBlock", "StarGenerator",
    "StarRRDB", "apply_dropout_mode", "build_generator", "pixel_shuffle",
    "FeatureExtractor", "LossWeights", "build_resnet_extractor",
    "build_tiny_extractor", "build_vgg_extractor", "content_loss",
    "discriminator_loss", "dual_perceptual_loss", "generator_adversarial_loss",
    "perceptual_loss", "total_discriminator_loss", "total_generator_loss",
    "Ema", "TrainConfig", "Trainer", "ema_update",
    "load_generator_from_checkpoint", "make_batch",
    "__version__",
]
