"""Hurst exponent and fractal dimension estimation.

The scattering estimator regresses ``log2(moment_j ** (1/q))`` on the dyadic
scale ``j``; for an fBm the slope is the Hurst exponent H, and the fractal
dimension follows as ``FD = n + 1 - H``.
"""

import logging
import math

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from fractex.errors import DegenerateInputError, ParameterError
from fractex.models.hurst import HurstEstimate, Nonlinearity, Pooling, PoolSpec
from fractex.models.volume import Volume
from fractex.models.wavelet import Boundary, ScatterStack, WaveletSpec
from fractex.services.layers import block_view
from fractex.services.wavelet import scatter, scattering_moment

logger = logging.getLogger(__name__)

MIN_SCALES = 3
# the two finest scales of a series carry a discretisation bias that pulls the slope low
SERIES_SCALES = (3, 7)
FIELD_SCALES = (1, 5)
# relative size below which a wavelet moment counts as zero
DEGENERATE_TOLERANCE = 1e-12


def fractal_dimension(hurst: float, euclid_dim: int) -> float:
    """``FD = n + 1 - H``."""
    if not 0.0 < hurst < 1.0:
        raise ParameterError(f"hurst must lie strictly inside (0, 1), got {hurst}")
    if euclid_dim not in (1, 2, 3):
        raise ParameterError(f"euclid_dim must be 1, 2 or 3, got {euclid_dim}")
    return euclid_dim + 1 - hurst


def default_hurst_scales(euclid_dim: int) -> tuple[int, int]:
    """Regression scales used when none are given: ``(3, 7)`` for series, ``(1, 5)`` for fields."""
    return SERIES_SCALES if euclid_dim == 1 else FIELD_SCALES


def default_scales(window: int) -> tuple[int, int]:
    """``(1, floor(log2(window)) - 1)``: at least two samples per largest-scale cell."""
    return 1, int(math.floor(math.log2(window))) - 1


def _check_scales(scales: tuple[int, int], q: float) -> tuple[int, int]:
    j_min, j_max = (int(s) for s in scales)
    if j_min < 1 or j_max <= j_min:
        raise ParameterError(f"scales must satisfy 1 <= j_min < j_max, got {scales}")
    if j_max - j_min + 1 < MIN_SCALES:
        raise ParameterError(f"need at least {MIN_SCALES} scales in the regression, got {scales}")
    if q <= 0:
        raise ParameterError(f"moment order q must be > 0, got {q}")
    return j_min, j_max


def _fit_slope(js: np.ndarray, ys: np.ndarray, weights: np.ndarray | None) -> tuple[float, float]:
    """(Weighted) least-squares slope and its standard error."""
    w = np.ones_like(js) if weights is None else weights / weights.sum() * js.size
    j_bar = np.sum(w * js) / np.sum(w)
    y_bar = np.sum(w * ys) / np.sum(w)
    sxx = np.sum(w * (js - j_bar) ** 2)
    slope = np.sum(w * (js - j_bar) * (ys - y_bar)) / sxx
    residuals = ys - (y_bar + slope * (js - j_bar))
    dof = js.size - 2
    stderr = math.sqrt(np.sum(w * residuals**2) / dof / sxx) if dof > 0 else float("nan")
    return float(slope), stderr


def _regress(
    moments: dict[int, float], q: float, euclid_dim: int, amplitude: float, weighted: bool
) -> HurstEstimate:
    js = np.array(sorted(moments), dtype=np.float64)
    values = np.array([moments[int(j)] for j in js])
    floor = DEGENERATE_TOLERANCE * amplitude
    if amplitude == 0.0 or not np.all(np.isfinite(values)) or np.any(values ** (1.0 / q) <= floor):
        raise DegenerateInputError("a wavelet moment is zero; the input carries no multiscale signal")
    ys = np.log2(values) / q
    weights = 2.0 ** (-euclid_dim * js) if weighted else None
    slope, stderr = _fit_slope(js, ys, weights)
    return HurstEstimate(
        hurst=slope,
        euclid_dim=euclid_dim,
        log_moments=[(int(j), float(y)) for j, y in zip(js, ys, strict=True)],
        slope_stderr=stderr,
        scales_used=(int(js[0]), int(js[-1])),
        q=q,
    )


def _amplitude(x: Volume) -> float:
    data = x.data
    return float(np.max(np.abs(data - data.mean()))) if data.size else 0.0


def estimate_hurst(
    x: Volume,
    spec: WaveletSpec | None = None,
    scales: tuple[int, int] | None = None,
    q: float = 1.0,
    weighted: bool = False,
) -> HurstEstimate:
    """Scattering-moment Hurst estimate over dyadic scales ``j_min..j_max``.

    ``scales`` defaults to :func:`default_hurst_scales` for the dimension of ``x``.
    """
    spec = spec or WaveletSpec()
    j_min, j_max = _check_scales(scales or default_hurst_scales(x.ndim), q)
    stack = scatter(x, spec, j_max)
    moments = {j: scattering_moment(stack, j, q) for j in range(j_min, j_max + 1)}
    return _regress(moments, q, x.ndim, _amplitude(x), weighted)


def apply_nonlinearity(a: np.ndarray, kind: Nonlinearity) -> np.ndarray:
    """M_n; every choice is 1-Lipschitz."""
    match Nonlinearity(kind):
        case Nonlinearity.MODULUS | Nonlinearity.SQUARE_SQRT:
            return np.abs(a)
        case Nonlinearity.RELU:
            return np.maximum(a, 0.0)
        case Nonlinearity.IDENTITY:
            return a


def apply_pooling(a: np.ndarray, kind: Pooling, factor: int, axes: tuple[int, ...] | None = None) -> np.ndarray:
    """P_n over non-overlapping ``factor``-blocks along ``axes`` (all axes by default)."""
    kind = Pooling(kind)
    if kind == Pooling.IDENTITY or factor == 1:
        return a
    axes = tuple(range(a.ndim)) if axes is None else axes
    blocks = block_view(a, factor, axes)
    reduce_axes = tuple(range(-len(axes), 0))
    return blocks.mean(axis=reduce_axes) if kind == Pooling.MEAN else blocks.max(axis=reduce_axes)


def pooled_moment(stack: ScatterStack, j: int, q: float, pool: PoolSpec, ndim: int) -> float:
    """Moment of ``S**(d/2) * P_n(M_n(|X * psi_j|))``.

    The ``S**(d/2)`` factor is constant across scales and drops out of the slope.
    """
    grid = apply_nonlinearity(stack.at(j), pool.nonlinearity)
    grid = apply_pooling(grid, pool.pooling, pool.pool_factor, axes=tuple(range(1, ndim + 1)))
    grid = grid * float(pool.pool_factor) ** (ndim / 2.0)
    return float(np.mean(grid**q))


def pooled_hurst(
    x: Volume,
    spec: WaveletSpec | None = None,
    scales: tuple[int, int] | None = None,
    pool: PoolSpec | None = None,
    q: float = 1.0,
    weighted: bool = False,
) -> HurstEstimate:
    """Hurst estimate from pooled, nonlinearly mapped wavelet moduli."""
    spec = spec or WaveletSpec()
    pool = pool or PoolSpec()
    j_min, j_max = _check_scales(scales or default_hurst_scales(x.ndim), q)
    stack = scatter(x, spec, j_max)
    moments = {j: pooled_moment(stack, j, q, pool, x.ndim) for j in range(j_min, j_max + 1)}
    return _regress(moments, q, x.ndim, _amplitude(x), weighted)


def increment_variance_hurst(x: Volume, lags: tuple[int, ...] = (1, 2, 4, 8, 16)) -> HurstEstimate:
    """Structure-function estimate: ``Var(x(t + tau) - x(t)) ~ tau**(2H)``, averaged over axes."""
    if len(lags) < MIN_SCALES or any(lag < 1 or lag & (lag - 1) for lag in lags):
        raise ParameterError(f"need >= {MIN_SCALES} power-of-two lags, got {lags}")
    if any(max(lags) >= n for n in x.shape):
        raise ParameterError(f"largest lag {max(lags)} does not fit dims {x.shape}")
    variances = {}
    for lag in lags:
        per_axis = []
        for axis in range(1, x.ndim + 1):
            n = x.data.shape[axis]
            head = np.take(x.data, np.arange(lag, n), axis=axis)
            tail = np.take(x.data, np.arange(0, n - lag), axis=axis)
            per_axis.append(np.var(head - tail))
        variances[int(math.log2(lag))] = float(np.mean(per_axis))
    # Var ~ tau**(2H) is the q = 2 case of the moment regression
    return _regress(variances, 2.0, x.ndim, _amplitude(x), weighted=False)


def _window_starts(n: int, window: int, stride: int) -> list[int]:
    starts = list(range(0, n - window + 1, stride))
    if starts[-1] != n - window:
        starts.append(n - window)
    return starts


def fd_map(
    x: Volume,
    window: int = 64,
    stride: int = 32,
    spec: WaveletSpec | None = None,
    scales: tuple[int, int] | None = None,
    q: float = 1.0,
    mode: str = "dense",
) -> Volume:
    """Sliding-window FD map resampled onto the input grid.

    Windows with degenerate content take the global FD; when the whole image is
    degenerate every cell takes the sentinel FD = n and ``attrs["warning"]`` is set.
    """
    spec = spec or WaveletSpec(boundary=Boundary.SYMMETRIC)
    if x.channels != 1:
        raise ParameterError(f"fd_map expects a single-channel volume, got {x.channels} channels")
    if window < 2 or window & (window - 1):
        raise ParameterError(f"window must be a power of two, got {window}")
    if stride < 1:
        raise ParameterError(f"stride must be >= 1, got {stride}")
    if any(window > n for n in x.shape):
        raise ParameterError(f"window {window} is larger than the image {x.shape}")
    scales = scales or default_scales(window)
    if window < 2 ** scales[1]:
        raise ParameterError(f"window {window} is smaller than 2**j_max = {2 ** scales[1]}")
    if mode not in ("dense", "scalar"):
        raise ParameterError(f"mode must be 'dense' or 'scalar', got {mode!r}")

    attrs = {"fd_fallback": "none", "fallback_windows": 0, "warning": False}
    global_fd: float | None = None

    def global_value() -> float:
        nonlocal global_fd
        if global_fd is None:
            try:
                global_fd = estimate_hurst(x, spec, scales, q).fd
                attrs["fd_fallback"] = "global"
            except DegenerateInputError:
                logger.warning("image is degenerate; using sentinel FD = %d", x.ndim)
                global_fd = float(x.ndim)
                attrs["fd_fallback"] = "sentinel"
                attrs["warning"] = True
        return global_fd

    if mode == "scalar":
        value = global_value()
        if attrs["fd_fallback"] == "global":
            attrs["fd_fallback"] = "none"
        return x.with_data(np.full_like(x.data, value, dtype=np.float64), channel_names=["fd"], attrs=attrs)

    starts = [_window_starts(n, window, stride) for n in x.shape]
    values = np.empty(tuple(len(s) for s in starts))
    for index in np.ndindex(values.shape):
        region = tuple(slice(starts[a][i], starts[a][i] + window) for a, i in enumerate(index))
        patch = Volume(x.data[(slice(None), *region)], spacing=x.spacing)
        try:
            values[index] = estimate_hurst(patch, spec, scales, q).fd
        except DegenerateInputError:
            values[index] = global_value()
            attrs["fallback_windows"] += 1
    if attrs["fallback_windows"]:
        logger.info("%d of %d windows fell back to the global FD", attrs["fallback_windows"], values.size)

    centers = []
    for axis, axis_starts in enumerate(starts):
        c = np.asarray(axis_starts, dtype=np.float64) + (window - 1) / 2.0
        if c.size == 1:
            c = np.array([c[0] - 0.5, c[0] + 0.5])
            values = np.repeat(values, 2, axis=axis)
        centers.append(c)
    interpolator = RegularGridInterpolator(tuple(centers), values, method="linear")
    coords = np.meshgrid(
        *[np.clip(np.arange(n, dtype=np.float64), c[0], c[-1]) for n, c in zip(x.shape, centers, strict=True)],
        indexing="ij",
    )
    points = np.stack([c.ravel() for c in coords], axis=-1)
    dense = interpolator(points).reshape(x.shape)
    return x.with_data(dense[np.newaxis], channel_names=["fd"], attrs=attrs)
