"""Shared fixtures."""

import numpy as np
import pytest

from fractex.models.network import ArchSpec
from fractex.models.volume import Volume
from fractex.models.wavelet import WaveletFamily, WaveletSpec


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def toy_arch() -> ArchSpec:
    """Depth-1, 8x8, two-class network with every stage switched on."""
    return ArchSpec(
        input_shape=(8, 8),
        in_channels=1,
        num_classes=2,
        depth=1,
        base_filters=4,
        wavelet=WaveletSpec(WaveletFamily.HAAR),
        wavelet_levels=1,
        fd_channel=True,
        dropout_rate=0.2,
        se_head=True,
    )


@pytest.fixture
def toy_input(rng) -> Volume:
    return Volume(rng.standard_normal((1, 8, 8)))


@pytest.fixture
def toy_fd(rng) -> Volume:
    return Volume(2.5 + 0.1 * rng.standard_normal((1, 8, 8)), channel_names=["fd"])


@pytest.fixture
def toy_labels() -> Volume:
    labels = np.zeros((1, 8, 8), dtype=np.uint8)
    labels[0, 2:6, 3:7] = 1
    return Volume(labels)
