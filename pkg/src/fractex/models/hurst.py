"""Fractal models: fBm parameters, Hurst estimates and pooled-layer settings."""

from dataclasses import dataclass, field
from enum import StrEnum

from fractex.errors import ParameterError

MIN_FBM_DIM = 8


@dataclass(frozen=True)
class FbmSpec:
    """Parameters of one fractional Brownian motion realisation."""

    hurst: float
    dims: tuple[int, ...]
    seed: int = 0
    normalize: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        if not 0.0 < self.hurst < 1.0:
            raise ParameterError(f"hurst must lie strictly inside (0, 1), got {self.hurst}")
        if not 1 <= len(self.dims) <= 3:
            raise ParameterError(f"fBm supports 1 to 3 dimensions, got {len(self.dims)}")
        if any(d < MIN_FBM_DIM for d in self.dims):
            raise ParameterError(f"every dim must be >= {MIN_FBM_DIM}, got {self.dims}")
        if not 0 <= self.seed < 2**64:
            raise ParameterError(f"seed must be an unsigned 64-bit integer, got {self.seed}")


@dataclass
class HurstEstimate:
    """Result of a scale regression; ``fd`` is always ``euclid_dim + 1 - hurst``."""

    hurst: float
    euclid_dim: int
    log_moments: list[tuple[int, float]]
    slope_stderr: float
    scales_used: tuple[int, int]
    q: float
    fd: float = field(init=False)

    def __post_init__(self) -> None:
        self.fd = self.euclid_dim + 1 - self.hurst

    def to_dict(self) -> dict:
        return {
            "hurst": self.hurst,
            "fd": self.fd,
            "euclid_dim": self.euclid_dim,
            "log_moments": [[j, m] for j, m in self.log_moments],
            "slope_stderr": self.slope_stderr,
            "scales_used": list(self.scales_used),
            "q": self.q,
        }


class Nonlinearity(StrEnum):
    MODULUS = "modulus"
    RELU = "relu"
    SQUARE_SQRT = "square_sqrt"  # sqrt(a**2) is the modulus
    IDENTITY = "identity"


class Pooling(StrEnum):
    MEAN = "mean"
    MAX = "max"
    IDENTITY = "identity"


@dataclass(frozen=True)
class PoolSpec:
    """Nonlinearity M_n, pooling P_n and pool factor S_n of one pooled layer."""

    nonlinearity: Nonlinearity = Nonlinearity.MODULUS
    pooling: Pooling = Pooling.MEAN
    pool_factor: int = 1

    def __post_init__(self) -> None:
        if self.pool_factor < 1:
            raise ParameterError(f"pool_factor must be >= 1, got {self.pool_factor}")
        if self.pooling == Pooling.IDENTITY and self.pool_factor != 1:
            raise ParameterError("identity pooling requires pool_factor 1")

    @property
    def lipschitz_nonlinearity(self) -> float:
        """L_n of the selected nonlinearity."""
        return 1.0

    @property
    def lipschitz_pooling(self) -> float:
        """R_n of the selected pooling."""
        return 1.0


@dataclass(frozen=True)
class FdOptions:
    """How the FD input channel of the network is computed."""

    window: int = 16
    stride: int = 8
    family: str = "db2"
    boundary: str = "symmetric"
    scales: tuple[int, int] = (1, 3)
    q: float = 1.0
    mode: str = "dense"
