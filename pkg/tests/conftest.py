import numpy as np
import pytest

from blindsr.discriminator import DiscriminatorConfig
from blindsr.generator import GeneratorConfig


def small_star_cfg(**kw):
    base = dict(variant="star", num_blocks=2, base_features=32, growth_channels=16)
    base.update(kw)
    return GeneratorConfig(**base)


def small_lite_cfg(**kw):
    base = dict(variant="lite", base_features=16)
    base.update(kw)
    return GeneratorConfig(**base)


def small_disc_cfg(**kw):
    base = dict(base_features=16)
    base.update(kw)
    return DiscriminatorConfig(**base)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def hr_pool():
    gen = np.random.default_rng(11)
    return [gen.random((3, 96, 96)).astype(np.float32) for _ in range(2)]
