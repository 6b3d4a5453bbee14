"""Multilevel DWT and dyadic wavelet-modulus (scattering) transforms.

The DWT path is orthonormal (PyWavelets filter banks). The scattering path
runs an a-trous cascade whose filters are rescaled by 1/sqrt(2), so the
equivalent wavelet at scale j is L1-normalised: ``psi_j(t) = 2**-j psi(2**-j t)``.
"""

import itertools
import math

import numpy as np
import pywt

from fractex.errors import ParameterError, StructureError
from fractex.models.volume import Volume
from fractex.models.wavelet import Boundary, ScatterStack, Subbands, WaveletSpec


def _wavelet(spec: WaveletSpec) -> pywt.Wavelet:
    return pywt.Wavelet(str(spec.family))


def _spatial_axes(x: Volume) -> tuple[int, ...]:
    return tuple(range(1, x.ndim + 1))


def orientation_keys(ndim: int) -> list[str]:
    """Detail orientation keys in PyWavelets order, e.g. ``["ad", "da", "dd"]`` in 2-D."""
    return ["".join(p) for p in itertools.product("ad", repeat=ndim) if "d" in p]


def level_shapes(shape: tuple[int, ...], spec: WaveletSpec, levels: int) -> list[tuple[int, ...]]:
    """Subband grid shape at each level 1..levels."""
    filter_len = _wavelet(spec).dec_len
    shapes = []
    current = tuple(shape)
    for _ in range(levels):
        current = tuple(pywt.dwt_coeff_len(n, filter_len, spec.pywt_mode) for n in current)
        shapes.append(current)
    return shapes


def dwt_forward(x: Volume, spec: WaveletSpec, levels: int) -> Subbands:
    """Multilevel DWT over every spatial axis, channel by channel."""
    if levels < 1:
        raise ParameterError(f"levels must be >= 1, got {levels}")
    if any(n < 2**levels for n in x.shape):
        raise ParameterError(f"spatial dims {x.shape} are too small for {levels} levels (need >= {2**levels})")
    coeffs = pywt.wavedecn(x.data, _wavelet(spec), mode=spec.pywt_mode, level=levels, axes=_spatial_axes(x))

    def as_volume(arr: np.ndarray, level: int) -> Volume:
        return Volume(arr, spacing=tuple(s * 2**level for s in x.spacing), channel_names=list(x.channel_names))

    approx = as_volume(coeffs[0], levels)
    details = []
    for level, bands in zip(range(1, levels + 1), reversed(coeffs[1:]), strict=True):
        details.append({key: as_volume(bands[key], level) for key in sorted(bands)})
    return Subbands(approx=approx, details=details, spec=spec, levels=levels, input_shape=x.shape)


def _check_subbands(s: Subbands) -> None:
    if s.levels < 1 or len(s.details) != s.levels:
        raise StructureError(f"subbands declare {s.levels} levels but hold {len(s.details)} detail levels")
    ndim = len(s.input_shape)
    expected_keys = orientation_keys(ndim)
    shapes = level_shapes(s.input_shape, s.spec, s.levels)
    channels = s.approx.channels
    for level, (bands, shape) in enumerate(zip(s.details, shapes, strict=True), start=1):
        if sorted(bands) != expected_keys:
            raise StructureError(f"level {level} has orientations {sorted(bands)}, expected {expected_keys}")
        for key, band in bands.items():
            if band.shape != shape or band.channels != channels:
                got, want = (band.channels, *band.shape), (channels, *shape)
                raise StructureError(f"level {level} band '{key}' has shape {got}, expected {want}")
    if s.approx.shape != shapes[-1]:
        raise StructureError(f"approximation has shape {s.approx.shape}, expected {shapes[-1]}")


def dwt_inverse(s: Subbands) -> Volume:
    """Exact inverse of :func:`dwt_forward` for a matching spec and level count."""
    _check_subbands(s)
    ndim = len(s.input_shape)
    coeffs: list = [s.approx.data]
    for bands in reversed(s.details):
        coeffs.append({key: band.data for key, band in bands.items()})
    out = pywt.waverecn(coeffs, _wavelet(s.spec), mode=s.spec.pywt_mode, axes=tuple(range(1, ndim + 1)))
    out = out[(slice(None), *(slice(0, n) for n in s.input_shape))]
    spacing = tuple(sp / 2**s.levels for sp in s.approx.spacing)
    return Volume(out, spacing=spacing, channel_names=list(s.approx.channel_names))


def scattering_filters(spec: WaveletSpec) -> tuple[np.ndarray, np.ndarray]:
    """Low-pass and high-pass taps rescaled for the L1-normalised cascade."""
    wavelet = _wavelet(spec)
    scale = 1.0 / math.sqrt(2.0)
    return np.asarray(wavelet.dec_lo) * scale, np.asarray(wavelet.dec_hi) * scale


def _dilated_filter(a: np.ndarray, taps: np.ndarray, step: int, axis: int) -> np.ndarray:
    out = np.zeros_like(a)
    for k, tap in enumerate(taps):
        out += tap * np.roll(a, k * step, axis=axis)
    return out


def scatter(x: Volume, spec: WaveletSpec, J: int) -> ScatterStack:
    """Orientation-averaged moduli ``|X * psi_j|`` for ``j = 1..J``."""
    if J < 2:
        raise ParameterError(f"J must be >= 2, got {J}")
    if any(n < 2**J for n in x.shape):
        raise ParameterError(f"spatial dims {x.shape} are too small for J={J} (need >= {2**J})")
    lo, hi = scattering_filters(spec)
    axes = _spatial_axes(x)
    data = x.data.astype(np.float64, copy=False)

    pad = 0
    if spec.boundary == Boundary.SYMMETRIC:
        pad = (lo.size - 1) * (2**J - 1)
        data = np.pad(data, [(0, 0)] + [(pad, pad)] * x.ndim, mode="symmetric")
    crop = (slice(None), *(slice(pad, pad + n) for n in x.shape))

    approx = data
    coeffs = []
    for j in range(1, J + 1):
        step = 2 ** (j - 1)
        modulus = np.zeros_like(approx)
        for a in axes:
            band = approx
            for b in axes:
                if b != a:
                    band = _dilated_filter(band, lo, step, b)
            modulus += np.abs(_dilated_filter(band, hi, step, a))
        modulus /= len(axes)
        coeffs.append(Volume(modulus[crop], spacing=x.spacing, channel_names=list(x.channel_names)))
        for b in axes:
            approx = _dilated_filter(approx, lo, step, b)
    return ScatterStack(coeffs=coeffs, scales=J, spec=spec)


def scattering_moment(stack: ScatterStack, j: int, q: float) -> float:
    """Empirical q-th moment ``mean(|W_x|**q)`` over every sample at scale j."""
    if not 1 <= j <= stack.scales:
        raise ParameterError(f"scale j={j} outside 1..{stack.scales}")
    if q <= 0:
        raise ParameterError(f"moment order q must be > 0, got {q}")
    return float(np.mean(stack.at(j) ** q))
