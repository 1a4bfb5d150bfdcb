"""
Fixtures compartidos: config micro del neck, generadores con semilla y pirámides aleatorias.
"""
import numpy as np
import pytest

from GoldNeck.neck.config import NeckConfig
from GoldNeck.neck.gd_neck import neck_graph, pyramid_dims, random_pyramid
from GoldNeck.params import init_params
from GoldNeck.tensor.core import Tensor

MICRO_SIZE = 32


def micro_config(**overrides) -> NeckConfig:
    """Neck diminuto: B2..B5 con 4/8/8/16 canales, un RepConv por bloque y L=1."""
    base = dict(
        scale="N",
        channels=(4, 8, 8, 16),
        low_mid_channels=8,
        repblock_depth=1,
        transformer_depth=1,
        attn_dim=2,
        heads=2,
        embed_width=8,
    )
    base.update(overrides)
    return NeckConfig(**base)


def random_tensor(rng, dims, low=None, high=None) -> Tensor:
    if low is not None:
        return Tensor(rng.uniform(low, high, size=dims))
    return Tensor(rng.standard_normal(dims))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def micro_cfg():
    return micro_config()


@pytest.fixture
def micro_pyramid(micro_cfg):
    return random_pyramid(micro_cfg, MICRO_SIZE, seed=3)


@pytest.fixture
def micro_store(micro_cfg):
    return init_params(neck_graph(micro_cfg), pyramid_dims(micro_cfg, MICRO_SIZE), seed=11)
