"""Configuration: environment settings and the strict TOML run configuration."""

import tomllib
from functools import lru_cache
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict

from fractex.errors import ConfigError, FractexError
from fractex.models.dataset import EllipseGeometry
from fractex.models.hurst import FbmSpec, FdOptions
from fractex.models.network import ArchSpec, TrainConfig
from fractex.models.wavelet import Boundary, WaveletFamily, WaveletSpec

RUN_CONFIG_FORMAT_VERSION = 1


class Settings(BaseSettings):
    """Application settings loaded from environment variables."""

    model_config = SettingsConfigDict(
        env_prefix="FRACTEX_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    output_dir: Path = Path("output")
    seed: int = 0
    log_level: str = "WARNING"


@lru_cache
def get_settings() -> Settings:
    """Get cached settings instance."""
    return Settings()


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class WaveletBlock(_Strict):
    family: WaveletFamily = WaveletFamily.HAAR
    boundary: Boundary = Boundary.PERIODIC


class ArchBlock(_Strict):
    input_shape: list[int] = Field(default_factory=lambda: [64, 64])
    in_channels: int = 1
    num_classes: int = 2
    depth: int = 2
    base_filters: int = 8
    kernel_size: int = 3
    wavelet: WaveletBlock = Field(default_factory=WaveletBlock)
    wavelet_levels: int = 1
    fd_channel: bool = True
    dropout_rate: float = 0.1
    se_head: bool = True

    def build(self) -> ArchSpec:
        fields = self.model_dump(exclude={"wavelet", "input_shape"})
        wavelet = WaveletSpec(self.wavelet.family, self.wavelet.boundary)
        return ArchSpec(input_shape=tuple(self.input_shape), wavelet=wavelet, **fields)


class TrainBlock(_Strict):
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    weight_decay: float = 0.0
    batch_size: int = 1
    epochs: int = 20
    loss_weights: tuple[float, float] = (1.0, 0.1)
    seed: int = 0

    def build(self) -> TrainConfig:
        return TrainConfig(**self.model_dump())


class TextureBlock(_Strict):
    hurst: float


class DatasetBlock(_Strict):
    background: TextureBlock = Field(default_factory=lambda: TextureBlock(hurst=0.8))
    foreground: TextureBlock = Field(default_factory=lambda: TextureBlock(hurst=0.3))
    n_cases: int = 200
    n_test: int = 50
    image_size: list[int] = Field(default_factory=lambda: [64, 64])
    min_fraction: float = 0.05
    max_fraction: float = 0.4
    border: float = 2.0
    seed: int = 0
    root: Path = Path("dataset")

    def textures(self) -> tuple[FbmSpec, FbmSpec]:
        size = tuple(self.image_size)
        return FbmSpec(self.background.hurst, size), FbmSpec(self.foreground.hurst, size)

    def geometry(self) -> EllipseGeometry:
        return EllipseGeometry(self.min_fraction, self.max_fraction, self.border)


class FdBlock(_Strict):
    window: int = 16
    stride: int = 8
    wavelet: WaveletBlock = Field(
        default_factory=lambda: WaveletBlock(family=WaveletFamily.DB2, boundary=Boundary.SYMMETRIC)
    )
    j_min: int = 1
    j_max: int = 3
    q: float = 1.0
    mode: Literal["dense", "scalar"] = "dense"

    def build(self) -> FdOptions:
        return FdOptions(
            window=self.window,
            stride=self.stride,
            family=str(self.wavelet.family),
            boundary=str(self.wavelet.boundary),
            scales=(self.j_min, self.j_max),
            q=self.q,
            mode=self.mode,
        )


class RunConfig(_Strict):
    """Top-level run configuration; unknown keys are rejected at every level."""

    format_version: int = RUN_CONFIG_FORMAT_VERSION
    output_dir: Path | None = None
    arch: ArchBlock = Field(default_factory=ArchBlock)
    train: TrainBlock = Field(default_factory=TrainBlock)
    dataset: DatasetBlock = Field(default_factory=DatasetBlock)
    fd: FdBlock = Field(default_factory=FdBlock)


def load_run_config(path: Path | str) -> RunConfig:
    """Parse and validate a TOML run configuration.

    Raises:
        ConfigError: naming the file and the first offending field
    """
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError("config file not found", path=path) from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}", path=path) from exc
    try:
        config = RunConfig.model_validate(raw)
    except ValidationError as exc:
        error = exc.errors()[0]
        field = ".".join(str(part) for part in error["loc"])
        raise ConfigError(error["msg"], path=path, field=field) from exc
    if config.format_version != RUN_CONFIG_FORMAT_VERSION:
        raise ConfigError(f"unsupported format version {config.format_version}", path=path, field="format_version")
    # domain validation of the blocks that build frozen specs
    for name, build in (
        ("arch", config.arch.build),
        ("train", config.train.build),
        ("dataset", config.dataset.textures),
        ("dataset", config.dataset.geometry),
        ("fd", config.fd.build),
    ):
        try:
            build()
        except FractexError as exc:
            raise ConfigError(str(exc), path=path, field=name) from exc
    return config
