"""Segmentation network architecture, parameters and training settings."""

from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np

from fractex.errors import ParameterError
from fractex.models.wavelet import Boundary, WaveletFamily, WaveletSpec


@dataclass(frozen=True)
class ArchSpec:
    """Architecture of the wavelet + FD U-Net."""

    input_shape: tuple[int, ...] = (64, 64)
    in_channels: int = 1
    num_classes: int = 2
    depth: int = 2
    base_filters: int = 8
    kernel_size: int = 3
    wavelet: WaveletSpec = field(default_factory=lambda: WaveletSpec(WaveletFamily.HAAR))
    wavelet_levels: int = 1
    fd_channel: bool = True
    dropout_rate: float = 0.1
    se_head: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "input_shape", tuple(int(d) for d in self.input_shape))
        if not 1 <= len(self.input_shape) <= 3:
            raise ParameterError(f"input_shape must have 1 to 3 spatial axes, got {self.input_shape}")
        if self.in_channels < 1:
            raise ParameterError(f"in_channels must be >= 1, got {self.in_channels}")
        if self.num_classes < 2:
            raise ParameterError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.depth < 1:
            raise ParameterError(f"depth must be >= 1, got {self.depth}")
        if self.base_filters < 4:
            raise ParameterError(f"base_filters must be >= 4, got {self.base_filters}")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ParameterError(f"kernel_size must be a positive odd integer, got {self.kernel_size}")
        if self.wavelet_levels < 0:
            raise ParameterError(f"wavelet_levels must be >= 0, got {self.wavelet_levels}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ParameterError(f"dropout_rate must lie in [0, 1), got {self.dropout_rate}")

    @property
    def ndim(self) -> int:
        return len(self.input_shape)

    @property
    def bands_per_channel(self) -> int:
        """Approximation plus ``2**ndim - 1`` detail orientations per level."""
        return 1 + (2**self.ndim - 1) * self.wavelet_levels

    @property
    def encoder_in_channels(self) -> int:
        return self.in_channels * self.bands_per_channel + int(self.fd_channel)

    @property
    def head_channels(self) -> int:
        return self.num_classes * self.bands_per_channel

    @property
    def working_shape(self) -> tuple[int, ...]:
        """Grid the convolution stages run on (the finest subband grid)."""
        shrink = 2 if self.wavelet_levels > 0 else 1
        return tuple(d // shrink for d in self.input_shape)

    def filters(self, stage: int) -> int:
        return self.base_filters * 2**stage

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data["input_shape"] = list(self.input_shape)
        data["wavelet"] = {"family": str(self.wavelet.family), "boundary": str(self.wavelet.boundary)}
        return data

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ArchSpec":
        data = dict(data)
        wavelet = data.pop("wavelet", None) or {}
        spec = WaveletSpec(
            WaveletFamily(wavelet.get("family", WaveletFamily.HAAR)),
            Boundary(wavelet.get("boundary", Boundary.PERIODIC)),
        )
        return cls(wavelet=spec, **data)


@dataclass(frozen=True)
class TrainConfig:
    """Adam hyperparameters and loss weighting."""

    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    weight_decay: float = 0.0
    batch_size: int = 1
    epochs: int = 20
    loss_weights: tuple[float, float] = (1.0, 0.1)  # (cross-entropy, SE-loss)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ParameterError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ParameterError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ParameterError(f"epochs must be >= 1, got {self.epochs}")
        if self.weight_decay < 0:
            raise ParameterError(f"weight_decay must be >= 0, got {self.weight_decay}")


@dataclass
class NetworkParams:
    """Named filter and bias tensors of one network."""

    tensors: dict[str, np.ndarray]
    arch: ArchSpec
    init_seed: int = 0
    # bumped on every in-place update so stale forward caches can be detected
    version: int = 0

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    @property
    def names(self) -> list[str]:
        return list(self.tensors)

    @property
    def num_parameters(self) -> int:
        return sum(t.size for t in self.tensors.values())

    def copy(self) -> "NetworkParams":
        return NetworkParams({k: v.copy() for k, v in self.tensors.items()}, self.arch, self.init_seed, self.version)


@dataclass
class TrainingLog:
    """Per-epoch mean losses of one training run."""

    epoch_losses: list[float] = field(default_factory=list)
    steps: int = 0
    test_dice: float | None = None
