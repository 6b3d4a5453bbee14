"""Intensity normalisation, centred cropping and label remapping for BraTS-style volumes."""

import numpy as np

from fractex.errors import DataError, ParameterError, StructureError
from fractex.models.volume import Volume

# BraTS label values and the contiguous class indices the network trains on
BRATS_TO_CLASS = {0: 0, 1: 1, 2: 2, 4: 3}
CLASS_TO_BRATS = {v: k for k, v in BRATS_TO_CLASS.items()}


def normalize_volume(x: Volume) -> Volume:
    """Per-channel zero mean and unit std over the nonzero voxels; zeros stay zero."""
    data = x.data.astype(np.float64)
    out = np.zeros_like(data)
    for c in range(x.channels):
        channel = data[c]
        mask = channel != 0
        count = int(np.count_nonzero(mask))
        name = x.channel_names[c]
        if count < 2:
            raise DataError(f"channel '{name}' has {count} nonzero voxels; cannot normalise", field=name)
        values = channel[mask]
        std = float(values.std())
        if std == 0.0:
            raise DataError(f"channel '{name}' is constant over its nonzero voxels", field=name)
        out[c][mask] = (values - values.mean()) / std
    return x.with_data(out)


def crop_offsets(source: tuple[int, ...], target: tuple[int, ...]) -> tuple[int, ...]:
    """``floor((src - dst) / 2)`` per axis."""
    if len(source) != len(target):
        raise ParameterError(f"target dims {target} do not match {len(source)} spatial axes")
    if any(t > s for s, t in zip(source, target, strict=True)) or any(t < 1 for t in target):
        raise ParameterError(f"target dims {target} must be positive and no larger than {source}")
    return tuple((s - t) // 2 for s, t in zip(source, target, strict=True))


def crop_volume(x: Volume, target_dims: tuple[int, ...], mode: str = "center") -> Volume:
    """Centred crop; offsets and original dims go into ``attrs`` for :func:`embed_volume`."""
    if mode != "center":
        raise ParameterError(f"only 'center' cropping is supported, got {mode!r}")
    target = tuple(int(t) for t in target_dims)
    offsets = crop_offsets(x.shape, target)
    region = tuple(slice(o, o + t) for o, t in zip(offsets, target, strict=True))
    attrs = dict(x.attrs)
    attrs["crop_offsets"] = list(offsets)
    attrs["original_dims"] = list(x.shape)
    return x.with_data(x.data[(slice(None), *region)].copy(), attrs=attrs)


def embed_volume(cropped: Volume, original_dims: tuple[int, ...] | None = None) -> Volume:
    """Place a cropped volume back into its original grid, padding with zeros."""
    offsets = cropped.attrs.get("crop_offsets")
    dims = original_dims or cropped.attrs.get("original_dims")
    if offsets is None or dims is None:
        raise DataError("volume carries no crop offsets / original dims", field="crop_offsets")
    dims = tuple(int(d) for d in dims)
    offsets = tuple(int(o) for o in offsets)
    if len(dims) != cropped.ndim or any(o + n > d for o, n, d in zip(offsets, cropped.shape, dims, strict=True)):
        raise StructureError(f"crop of {cropped.shape} at {offsets} does not fit original dims {dims}")
    out = np.zeros((cropped.channels, *dims), dtype=cropped.data.dtype)
    region = tuple(slice(o, o + n) for o, n in zip(offsets, cropped.shape, strict=True))
    out[(slice(None), *region)] = cropped.data
    attrs = {k: v for k, v in cropped.attrs.items() if k not in ("crop_offsets", "original_dims")}
    return cropped.with_data(out, attrs=attrs)


def validate_labels(labels: Volume | np.ndarray, allowed: frozenset[int] = frozenset(BRATS_TO_CLASS)) -> None:
    data = labels.data if isinstance(labels, Volume) else np.asarray(labels)
    values = set(np.unique(data).astype(int).tolist())
    unknown = values - set(allowed)
    if unknown:
        raise DataError(f"unknown label values {sorted(unknown)}; valid labels are {sorted(allowed)}", field="labels")


def remap_labels(labels: Volume) -> Volume:
    """BraTS ``{0, 1, 2, 4}`` to class indices ``{0, 1, 2, 3}``."""
    validate_labels(labels)
    lut = np.zeros(5, dtype=np.uint8)
    for label, index in BRATS_TO_CLASS.items():
        lut[label] = index
    return labels.with_data(lut[labels.data.astype(np.int64)])


def restore_labels(classes: Volume) -> Volume:
    """Class indices ``{0, 1, 2, 3}`` back to BraTS labels."""
    validate_labels(classes, frozenset(CLASS_TO_BRATS))
    lut = np.array([CLASS_TO_BRATS[i] for i in range(len(CLASS_TO_BRATS))], dtype=np.uint8)
    return classes.with_data(lut[classes.data.astype(np.int64)])
