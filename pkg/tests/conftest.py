import numpy as np
import pytest
import torch

from citygen.datasets import make_toy_city
from citygen.diffusion import BlockGenerator
from citygen.fields import default_palette
from citygen.painting import PaintGenerator

torch.set_num_threads(1)

# tiny profile shared by the fast tests: T=50, side 64, width 8, depth 1
TINY = dict(timesteps=50, train_side=64, base_width=8, depth=1, batch_size=4)


@pytest.fixture(scope="session")
def palette():
    return default_palette()


@pytest.fixture(scope="session")
def toy_fields(palette):
    return [make_toy_city(seed, side=64, palette=palette) for seed in range(12)]


@pytest.fixture(scope="session")
def tiny_block(toy_fields):
    return BlockGenerator(epochs=2, seed=0, **TINY).fit(toy_fields)


@pytest.fixture(scope="session")
def untrained_block(toy_fields):
    return BlockGenerator(epochs=0, seed=1, **TINY).fit(toy_fields)


@pytest.fixture(scope="session")
def untrained_paint(untrained_block):
    return PaintGenerator(mode="inpaint").init_from_block(untrained_block)


@pytest.fixture(scope="session")
def untrained_outpaint(untrained_block):
    return PaintGenerator(mode="outpaint").init_from_block(untrained_block)


@pytest.fixture(scope="session")
def tiny_paint(tiny_block, toy_fields):
    return PaintGenerator(block=tiny_block, mode="inpaint", epochs=1, batch_size=4, seed=0).fit(
        toy_fields
    )


@pytest.fixture(scope="session")
def tiny_outpaint(tiny_block, toy_fields):
    return PaintGenerator(block=tiny_block, mode="outpaint", epochs=1, batch_size=4, seed=0).fit(
        toy_fields
    )


def random_field(rng: np.random.Generator, palette, h, w, scale_tag="S128"):
    from citygen.fields import SemanticField

    grid = rng.integers(0, len(palette), size=(h, w), dtype=np.int32)
    return SemanticField(grid, palette, scale_tag)
