"""Data models for fractex."""

from .dataset import CaseEntry, DatasetManifest, EllipseGeometry
from .hurst import FbmSpec, FdOptions, HurstEstimate, Nonlinearity, Pooling, PoolSpec
from .network import ArchSpec, NetworkParams, TrainConfig, TrainingLog
from .report import REGIONS, CaseReport, EvalReport, Region, RegionDef, RegionScores, UqMethod, UqResult
from .volume import Volume
from .wavelet import Boundary, ScatterStack, Subbands, WaveletFamily, WaveletSpec

__all__ = [
    "ArchSpec",
    "Boundary",
    "CaseEntry",
    "CaseReport",
    "DatasetManifest",
    "EllipseGeometry",
    "EvalReport",
    "FbmSpec",
    "FdOptions",
    "HurstEstimate",
    "NetworkParams",
    "Nonlinearity",
    "PoolSpec",
    "Pooling",
    "REGIONS",
    "Region",
    "RegionDef",
    "RegionScores",
    "ScatterStack",
    "Subbands",
    "TrainConfig",
    "TrainingLog",
    "UqMethod",
    "UqResult",
    "Volume",
    "WaveletFamily",
    "WaveletSpec",
]
