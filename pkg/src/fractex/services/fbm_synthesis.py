"""Fractional Brownian motion synthesis.

1-D series use circulant embedding of the exact fractional Gaussian noise
covariance; 2-D and 3-D fields use spectral synthesis with power spectral
density ``|f|**-(2H + d)``. Outputs are zero-mean, and unit-variance when the
spec asks for normalisation.
"""

import numpy as np

from fractex.errors import NumericalError, ParameterError
from fractex.models.hurst import FbmSpec
from fractex.models.volume import Volume
from fractex.utils.rng import make_rng


def fgn_autocovariance(hurst: float, lags: np.ndarray) -> np.ndarray:
    """Autocovariance of unit-variance fractional Gaussian noise at integer lags."""
    k = np.abs(np.asarray(lags, dtype=np.float64))
    two_h = 2.0 * hurst
    return 0.5 * (np.abs(k - 1) ** two_h - 2.0 * k**two_h + (k + 1) ** two_h)


def _circulant_eigenvalues(hurst: float, n: int) -> np.ndarray:
    r = fgn_autocovariance(hurst, np.arange(n + 1))
    row = np.concatenate([r, r[-2:0:-1]])
    eigenvalues = np.fft.fft(row).real
    if eigenvalues.min() < -1e-10 * eigenvalues.max():
        raise NumericalError(f"circulant embedding is not nonnegative definite for H={hurst}, n={n}")
    return np.clip(eigenvalues, 0.0, None)


def _finish(field: np.ndarray, normalize: bool) -> np.ndarray:
    field = field - field.mean()
    if normalize:
        field = field / field.std()
        field = field - field.mean()
    return field


def synth_fbm_1d(spec: FbmSpec) -> Volume:
    """One fBm series of length ``spec.dims[0]`` (cumulated fGn increments)."""
    if len(spec.dims) != 1:
        raise ParameterError(f"synth_fbm_1d needs exactly one dim, got {spec.dims}")
    n = spec.dims[0]
    eigenvalues = _circulant_eigenvalues(spec.hurst, n)
    m = eigenvalues.size
    rng = make_rng(spec.seed)
    z = rng.standard_normal((2, m))
    w = np.sqrt(eigenvalues / m) * (z[0] + 1j * z[1])
    increments = np.fft.fft(w)[:n].real
    series = np.cumsum(increments)
    return Volume.from_grid(_finish(series, spec.normalize), attrs={"hurst": spec.hurst, "seed": spec.seed})


def spectral_amplitude(dims: tuple[int, ...], hurst: float) -> np.ndarray:
    """Amplitude ``|f|**-(H + d/2)`` on the real-FFT frequency grid, zero at DC."""
    d = len(dims)
    axes = [np.fft.fftfreq(n) for n in dims[:-1]] + [np.fft.rfftfreq(dims[-1])]
    grids = np.meshgrid(*axes, indexing="ij")
    radius = np.sqrt(sum(g**2 for g in grids))
    amplitude = np.zeros_like(radius)
    nonzero = radius > 0
    amplitude[nonzero] = radius[nonzero] ** (-(hurst + d / 2.0))
    return amplitude


def synth_fbm_nd(spec: FbmSpec) -> Volume:
    """Isotropic fBm field in 2-D or 3-D by spectral synthesis."""
    if len(spec.dims) not in (2, 3):
        raise ParameterError(f"synth_fbm_nd needs 2 or 3 dims, got {spec.dims}")
    rng = make_rng(spec.seed)
    white = rng.standard_normal(spec.dims)
    spectrum = np.fft.rfftn(white) * spectral_amplitude(spec.dims, spec.hurst)
    field = np.fft.irfftn(spectrum, s=spec.dims, axes=tuple(range(len(spec.dims))))
    return Volume.from_grid(_finish(field, spec.normalize), attrs={"hurst": spec.hurst, "seed": spec.seed})


def synth_fbm(spec: FbmSpec) -> Volume:
    """Dispatch on dimensionality."""
    return synth_fbm_1d(spec) if len(spec.dims) == 1 else synth_fbm_nd(spec)
