"""Synthetic two-texture dataset: blob geometry and the on-disk manifest."""

from dataclasses import dataclass

from pydantic import BaseModel, Field

from fractex.errors import ParameterError

DATASET_FORMAT_VERSION = 1


@dataclass(frozen=True)
class EllipseGeometry:
    """Random-ellipse foreground region sampler."""

    min_fraction: float = 0.05
    max_fraction: float = 0.4
    border: float = 2.0  # width of the texture blend, in voxels
    max_aspect: float = 2.0
    max_attempts: int = 100

    def __post_init__(self) -> None:
        if not 0.0 < self.min_fraction < self.max_fraction < 1.0:
            raise ParameterError(
                f"fractions must satisfy 0 < min < max < 1, got {self.min_fraction}..{self.max_fraction}"
            )
        if self.border <= 0:
            raise ParameterError(f"border must be > 0, got {self.border}")
        if self.max_aspect < 1.0:
            raise ParameterError(f"max_aspect must be >= 1, got {self.max_aspect}")
        if self.max_attempts < 1:
            raise ParameterError(f"max_attempts must be >= 1, got {self.max_attempts}")


class CaseEntry(BaseModel):
    case_id: str
    image: str
    mask: str
    foreground_fraction: float = Field(ge=0.0, le=1.0)


class DatasetManifest(BaseModel):
    """Everything needed to regenerate and read back a synthetic dataset."""

    format_version: int = DATASET_FORMAT_VERSION
    background_hurst: float
    foreground_hurst: float
    image_size: list[int]
    seed: int
    geometry: dict[str, float]
    cases: list[CaseEntry]
