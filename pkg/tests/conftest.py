"""
Shared fixtures: toy architectures, warmed-up frozen models, small datasets
"""

import logging

import numpy as np
import pytest

from dnnet_cli.commands.verify_commands import fresh_model
from dnnet_cli.core.config import ArchDescriptor
from dnnet_cli.data.synthetic import synth_bars
from dnnet_cli.model.nested import NestedModel
from dnnet_cli.numerics.rng import Rng
from dnnet_cli.utils.logging import ROOT_LOGGER


@pytest.fixture(autouse=True)
def reset_logging():
    """The CLI binds a handler to the runner's stream; drop it after every test"""
    yield
    logger = logging.getLogger(ROOT_LOGGER)
    for handler in logger.handlers:
        handler.close()
    logger.handlers.clear()
    logger.setLevel(logging.NOTSET)


# ---------------------------------------------------------------------------
# Architectures
# ---------------------------------------------------------------------------

@pytest.fixture
def toy_arch() -> ArchDescriptor:
    """stages [8], blocks [2], C=2, N=3: a 2x2 grid"""
    return ArchDescriptor.preset("toy")


@pytest.fixture
def toy4_arch() -> ArchDescriptor:
    """Two stages of two blocks, C=4: a 4x4 grid with a strided projection block"""
    return ArchDescriptor.preset("toy4")


# ---------------------------------------------------------------------------
# Models
# ---------------------------------------------------------------------------

@pytest.fixture
def toy_model() -> NestedModel:
    """Frozen toy model whose running statistics have seen one batch"""
    return fresh_model("toy")


@pytest.fixture(scope="module")
def toy4_model() -> NestedModel:
    """Shared frozen 4x4 model; tests must not mutate it (clone first)"""
    return fresh_model("toy4")


def random_images(model: NestedModel, count: int, seed: int = 3) -> np.ndarray:
    arch = model.descriptor
    return Rng(seed).child("images").uniform((count, arch.in_channels, *arch.input_hw), dtype=model.dtype)


@pytest.fixture
def images():
    return random_images


# ---------------------------------------------------------------------------
# Data
# ---------------------------------------------------------------------------

@pytest.fixture
def bars_train():
    return synth_bars(96, hw=8, num_classes=3, noise_sigma=0.25, seed=7, split="train")


@pytest.fixture
def bars_test():
    return synth_bars(60, hw=8, num_classes=3, noise_sigma=0.25, seed=7, split="test")
