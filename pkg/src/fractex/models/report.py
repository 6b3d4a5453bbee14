"""Evaluation and uncertainty result models."""

from dataclasses import dataclass
from enum import StrEnum

import numpy as np
from pydantic import BaseModel, Field

from fractex.models.volume import Volume

REPORT_FORMAT_VERSION = 1
SUMMARY_ROWS = ("mean", "sd", "median", "25quantile", "75quantile")


class Region(StrEnum):
    WT = "WT"
    TC = "TC"
    ET = "ET"


@dataclass(frozen=True)
class RegionDef:
    """A tumour region as a set of BraTS labels."""

    name: Region
    labels: frozenset[int]


REGIONS: tuple[RegionDef, ...] = (
    RegionDef(Region.WT, frozenset({1, 2, 4})),
    RegionDef(Region.TC, frozenset({1, 4})),
    RegionDef(Region.ET, frozenset({4})),
)


class RegionScores(BaseModel):
    dice: float = Field(ge=0.0, le=1.0)
    hd95: float = Field(ge=0.0)


class CaseReport(BaseModel):
    """Scores of one case, keyed by region name."""

    case_id: str = "case"
    regions: dict[str, RegionScores]
    nmse: float | None = None

    def metric_values(self) -> dict[str, float]:
        values = {}
        for name, scores in self.regions.items():
            values[f"Dice_{name}"] = scores.dice
            values[f"HD95_{name}"] = scores.hd95
        if self.nmse is not None:
            values["NMSE"] = self.nmse
        return values


class EvalReport(BaseModel):
    """Per-case scores plus the mean/sd/median/quartile summary rows."""

    format_version: int = REPORT_FORMAT_VERSION
    cases: list[CaseReport]
    summary: dict[str, dict[str, float]] = Field(default_factory=dict)


class UqMethod(StrEnum):
    MCDO = "mcdo"
    ENSEMBLE = "ensemble"
    TTA = "tta"
    COMBINED = "combined"


@dataclass
class UqResult:
    """Mean class probabilities and per-pixel variance over stochastic predictions."""

    mean_prob: Volume
    variance: Volume
    n_samples: int
    method: UqMethod

    @property
    def mean_variance(self) -> float:
        return float(self.variance.data.mean())

    @property
    def mean_entropy(self) -> float:
        p = np.clip(self.mean_prob.data, 1e-12, 1.0)
        return float(-(p * np.log(p)).sum(axis=0).mean())

    def summary(self) -> dict:
        return {
            "method": str(self.method),
            "n_samples": self.n_samples,
            "mean_variance": self.mean_variance,
            "mean_entropy": self.mean_entropy,
        }
