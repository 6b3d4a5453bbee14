"""Synthetic two-texture segmentation task.

Each case is a background fBm field with a random ellipse (ellipsoid in 3-D)
replaced by a second fBm texture of a different Hurst exponent, blended over
a thin border. The binary ground-truth mask marks the ellipse.
"""

import json
import logging
import math
from collections.abc import Iterator
from pathlib import Path

import numpy as np
from scipy import ndimage

from fractex.errors import DataError, ParameterError
from fractex.models.dataset import CaseEntry, DatasetManifest, EllipseGeometry
from fractex.models.hurst import FbmSpec
from fractex.models.volume import Volume
from fractex.services.fbm_synthesis import synth_fbm
from fractex.storage.volume_file import load_volume, save_volume
from fractex.utils.atomic import atomic_write_text
from fractex.utils.rng import derive_seeds, make_rng

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


def _unit_ball_volume(ndim: int) -> float:
    return math.pi ** (ndim / 2) / math.gamma(ndim / 2 + 1)


def sample_ellipse(shape: tuple[int, ...], geometry: EllipseGeometry, rng: np.random.Generator) -> np.ndarray:
    """Boolean ellipse mask whose area fraction lies in the geometry's range.

    Semi-axes are drawn for a target fraction and aspect ratio; 2-D ellipses
    get a random orientation. Draws that leave the border margin or miss the
    fraction range after rasterisation are rejected and redrawn.
    """
    ndim = len(shape)
    total = math.prod(shape)
    coords = np.indices(shape, dtype=np.float64)
    margin = geometry.border
    for _ in range(geometry.max_attempts):
        fraction = rng.uniform(geometry.min_fraction, geometry.max_fraction)
        radius = (fraction * total / _unit_ball_volume(ndim)) ** (1.0 / ndim)
        stretch = np.exp(rng.uniform(-0.5, 0.5, size=ndim) * math.log(geometry.max_aspect))
        semi_axes = radius * stretch / np.exp(np.mean(np.log(stretch)))
        extent = float(semi_axes.max()) if ndim == 2 else semi_axes
        low = margin + np.broadcast_to(extent, (ndim,))
        high = np.asarray(shape, dtype=np.float64) - 1 - low
        if np.any(high < low):
            continue
        center = rng.uniform(low, high)
        offsets = coords - center.reshape((ndim,) + (1,) * ndim)
        if ndim == 2:
            theta = rng.uniform(0.0, math.pi)
            c, s = math.cos(theta), math.sin(theta)
            offsets = np.stack([c * offsets[0] + s * offsets[1], -s * offsets[0] + c * offsets[1]])
        radial = sum((offsets[i] / semi_axes[i]) ** 2 for i in range(ndim))
        mask = radial <= 1.0
        measured = np.count_nonzero(mask) / total
        if geometry.min_fraction <= measured <= geometry.max_fraction:
            return mask
    raise ParameterError(
        f"could not place an ellipse covering {geometry.min_fraction}..{geometry.max_fraction} of {shape} "
        f"in {geometry.max_attempts} attempts"
    )


def blend_weights(mask: np.ndarray, border: float) -> np.ndarray:
    """Foreground weight ramping from 0 to 1 across ``border`` voxels centred on the mask edge."""
    inside = ndimage.distance_transform_edt(mask)
    outside = ndimage.distance_transform_edt(~mask)
    signed = np.where(mask, inside - 0.5, 0.5 - outside)
    return np.clip(0.5 + signed / border, 0.0, 1.0)


def synthesize_case(
    background_hurst: float,
    foreground_hurst: float,
    image_size: tuple[int, ...],
    geometry: EllipseGeometry,
    seed: int,
) -> tuple[Volume, Volume]:
    """One image / mask pair, fully determined by ``seed``."""
    bg_seed, fg_seed, shape_seed = derive_seeds(seed, 3)
    background = synth_fbm(FbmSpec(background_hurst, image_size, bg_seed, normalize=True)).data[0]
    foreground = synth_fbm(FbmSpec(foreground_hurst, image_size, fg_seed, normalize=True)).data[0]
    mask = sample_ellipse(tuple(image_size), geometry, make_rng(shape_seed))
    alpha = blend_weights(mask, geometry.border)
    image = (1.0 - alpha) * background + alpha * foreground
    return (
        Volume.from_grid(image.astype(np.float32), channel_names=["image"]),
        Volume.from_grid(mask.astype(np.uint8), channel_names=["mask"]),
    )


def generate_cases(
    background: FbmSpec,
    foreground: FbmSpec,
    n_cases: int,
    image_size: tuple[int, ...] | None = None,
    geometry: EllipseGeometry | None = None,
    seed: int = 0,
) -> Iterator[tuple[str, Volume, Volume]]:
    """Yield ``(case_id, image, mask)`` for every case without touching the disk."""
    if n_cases < 1:
        raise ParameterError(f"n_cases must be >= 1, got {n_cases}")
    if background.hurst == foreground.hurst:
        raise ParameterError(f"background and foreground need distinct Hurst exponents, both are {background.hurst}")
    size = tuple(image_size or background.dims)
    FbmSpec(background.hurst, size)  # validates the grid
    geometry = geometry or EllipseGeometry()
    for index, case_seed in enumerate(derive_seeds(seed, n_cases)):
        image, mask = synthesize_case(background.hurst, foreground.hurst, size, geometry, case_seed)
        yield f"case_{index:03d}", image, mask


def make_synthetic_dataset(
    background: FbmSpec,
    foreground: FbmSpec,
    n_cases: int,
    root: Path | str,
    image_size: tuple[int, ...] | None = None,
    geometry: EllipseGeometry | None = None,
    seed: int = 0,
) -> DatasetManifest:
    """Write ``root/case_XXX/{image,mask}`` VolumeFiles plus ``manifest.json``.

    Args:
        background: Texture of the background; only ``hurst`` (and ``dims`` when
            ``image_size`` is omitted) are used
        foreground: Texture inside the ellipse
        n_cases: Number of cases to generate
        root: Dataset directory
        image_size: Spatial grid of every case
        geometry: Ellipse sampler settings
        seed: Master seed; every case derives its own seeds from it

    Returns:
        The manifest that was written
    """
    root = Path(root)
    geometry = geometry or EllipseGeometry()
    size = tuple(image_size or background.dims)
    entries = []
    for case_id, image, mask in generate_cases(background, foreground, n_cases, size, geometry, seed):
        case_dir = root / case_id
        save_volume(image, case_dir / "image")
        save_volume(mask, case_dir / "mask")
        fraction = float(np.count_nonzero(mask.data)) / mask.data.size
        entries.append(
            CaseEntry(case_id=case_id, image=f"{case_id}/image", mask=f"{case_id}/mask", foreground_fraction=fraction)
        )
        logger.info("wrote %s (foreground fraction %.3f)", case_id, fraction)

    manifest = DatasetManifest(
        background_hurst=background.hurst,
        foreground_hurst=foreground.hurst,
        image_size=list(size),
        seed=seed,
        geometry={
            "min_fraction": geometry.min_fraction,
            "max_fraction": geometry.max_fraction,
            "border": geometry.border,
            "max_aspect": geometry.max_aspect,
        },
        cases=entries,
    )
    payload = json.dumps(manifest.model_dump(mode="json"), indent=2, sort_keys=True) + "\n"
    atomic_write_text(root / MANIFEST_NAME, payload)
    return manifest


def load_manifest(root: Path | str) -> DatasetManifest:
    path = Path(root) / MANIFEST_NAME
    if not path.exists():
        raise DataError("dataset manifest not found", path=path)
    try:
        return DatasetManifest.model_validate_json(path.read_text(encoding="utf-8"))
    except ValueError as exc:
        raise DataError(f"invalid manifest: {exc}", path=path) from exc


def load_dataset(root: Path | str) -> tuple[DatasetManifest, list[tuple[str, Volume, Volume]]]:
    """Manifest plus every ``(case_id, image, mask)`` listed in it."""
    root = Path(root)
    manifest = load_manifest(root)
    cases = [(c.case_id, load_volume(root / c.image), load_volume(root / c.mask)) for c in manifest.cases]
    return manifest, cases
