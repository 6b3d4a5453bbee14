"""Wavelet family and boundary settings plus transform containers."""

from dataclasses import dataclass
from enum import StrEnum

import numpy as np

from fractex.models.volume import Volume


class WaveletFamily(StrEnum):
    HAAR = "haar"
    DB2 = "db2"
    DB4 = "db4"


class Boundary(StrEnum):
    PERIODIC = "periodic"
    SYMMETRIC = "symmetric"


@dataclass(frozen=True)
class WaveletSpec:
    """Wavelet family plus boundary handling."""

    family: WaveletFamily = WaveletFamily.DB2
    boundary: Boundary = Boundary.PERIODIC

    @property
    def pywt_mode(self) -> str:
        return "periodization" if self.boundary == Boundary.PERIODIC else "symmetric"


@dataclass
class Subbands:
    """One multilevel decomposition.

    ``details[0]`` holds the finest level; each level maps an orientation key
    (``"d"`` in 1-D, ``"ad"``/``"da"``/``"dd"`` in 2-D, ...) to its grid.
    """

    approx: Volume
    details: list[dict[str, Volume]]
    spec: WaveletSpec
    levels: int
    input_shape: tuple[int, ...]

    @property
    def coefficient_count(self) -> int:
        total = self.approx.data.size
        for level in self.details:
            total += sum(v.data.size for v in level.values())
        return total


@dataclass
class ScatterStack:
    """Orientation-averaged wavelet moduli ``|X * psi_j|`` for ``j = 1..scales``."""

    coeffs: list[Volume]
    scales: int
    spec: WaveletSpec

    def at(self, j: int) -> np.ndarray:
        """Modulus array at dyadic scale ``j`` (1-based)."""
        return self.coeffs[j - 1].data
