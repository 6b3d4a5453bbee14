"""VolumeFile: a JSON header beside a raw little-endian payload.

``image.json`` describes the grid (dims, axis order, spacing, dtype tag,
channel names, attrs and the format version) and ``image.raw`` holds the
samples in C order over ``(channels, *dims)``.
"""

import json
import math
from pathlib import Path
from typing import Any

import numpy as np

from fractex.errors import DataError
from fractex.models.volume import Volume
from fractex.utils.atomic import atomic_write_bytes, atomic_write_text

VOLUME_FORMAT_VERSION = 1
DTYPES = {"float32": np.dtype("<f4"), "uint8": np.dtype("u1")}
AXIS_ORDER = "xyz"


def volume_paths(path: Path | str) -> tuple[Path, Path]:
    """Header and payload paths for ``path`` given with or without a suffix."""
    path = Path(path)
    base = path.with_suffix("") if path.suffix in (".json", ".raw") else path
    return base.with_name(base.name + ".json"), base.with_name(base.name + ".raw")


def _dtype_tag(data: np.ndarray, dtype: str | None) -> str:
    if dtype is not None:
        if dtype not in DTYPES:
            raise DataError(f"unknown dtype {dtype!r}; expected one of {sorted(DTYPES)}", field="dtype")
        return dtype
    if data.dtype == np.bool_ or np.issubdtype(data.dtype, np.integer):
        return "uint8"
    return "float32"


def _json_default(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"attribute of type {type(value).__name__} is not JSON serialisable")


def save_volume(volume: Volume, path: Path | str, dtype: str | None = None) -> Path:
    """Write header and payload atomically; returns the header path.

    Label maps (integer or boolean data) are stored as ``uint8``, everything
    else as ``float32`` unless ``dtype`` says otherwise.
    """
    header_path, payload_path = volume_paths(path)
    tag = _dtype_tag(volume.data, dtype)
    if tag == "uint8":
        lo, hi = (int(volume.data.min()), int(volume.data.max())) if volume.data.size else (0, 0)
        if lo < 0 or hi > 255 or not np.array_equal(volume.data, np.round(volume.data)):
            raise DataError("label payload must hold integers in 0..255", path=header_path, field="dtype")
    payload = np.ascontiguousarray(volume.data, dtype=DTYPES[tag])
    header = {
        "format_version": VOLUME_FORMAT_VERSION,
        "dims": list(volume.shape),
        "channels": volume.channels,
        "axis_order": AXIS_ORDER[: volume.ndim],
        "spacing": list(volume.spacing),
        "dtype": tag,
        "channel_names": list(volume.channel_names),
        "attrs": volume.attrs,
    }
    atomic_write_bytes(payload_path, payload.tobytes(order="C"))
    atomic_write_text(header_path, json.dumps(header, indent=2, sort_keys=True, default=_json_default) + "\n")
    return header_path


def _field(header: dict, name: str, path: Path) -> Any:
    if name not in header:
        raise DataError("missing header field", path=path, field=name)
    return header[name]


def load_volume(path: Path | str) -> Volume:
    """Read a VolumeFile; every malformed field raises :class:`DataError` naming it."""
    header_path, payload_path = volume_paths(path)
    if not header_path.exists():
        raise DataError("header sidecar not found", path=header_path, field="header")
    try:
        header = json.loads(header_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"header is not valid JSON ({exc.msg})", path=header_path, field="header") from exc
    if not isinstance(header, dict):
        raise DataError("header must be a JSON object", path=header_path, field="header")

    version = _field(header, "format_version", header_path)
    if version != VOLUME_FORMAT_VERSION:
        raise DataError(
            f"unsupported format version {version}, expected {VOLUME_FORMAT_VERSION}",
            path=header_path,
            field="format_version",
        )
    tag = _field(header, "dtype", header_path)
    if tag not in DTYPES:
        raise DataError(f"unknown dtype {tag!r}; expected one of {sorted(DTYPES)}", path=header_path, field="dtype")
    dims = _field(header, "dims", header_path)
    channels = _field(header, "channels", header_path)
    if not isinstance(dims, list) or not 1 <= len(dims) <= 3 or not all(isinstance(d, int) and d > 0 for d in dims):
        raise DataError(f"dims must list 1 to 3 positive integers, got {dims}", path=header_path, field="dims")
    if not isinstance(channels, int) or channels < 1:
        raise DataError(f"channels must be a positive integer, got {channels}", path=header_path, field="channels")
    axis_order = header.get("axis_order", AXIS_ORDER[: len(dims)])
    if axis_order != AXIS_ORDER[: len(dims)]:
        raise DataError(f"unsupported axis order {axis_order!r}", path=header_path, field="axis_order")

    if not payload_path.exists():
        raise DataError("payload file not found", path=payload_path, field="payload")
    raw = payload_path.read_bytes()
    dtype = DTYPES[tag]
    expected = channels * math.prod(dims) * dtype.itemsize
    if len(raw) != expected:
        raise DataError(
            f"payload holds {len(raw)} bytes, header implies {expected}", path=payload_path, field="payload"
        )
    data = np.frombuffer(raw, dtype=dtype).reshape((channels, *dims)).copy()
    try:
        return Volume(
            data,
            spacing=tuple(header.get("spacing") or ()),
            channel_names=list(header.get("channel_names") or []),
            attrs=dict(header.get("attrs") or {}),
        )
    except ValueError as exc:
        raise DataError(str(exc), path=header_path, field="spacing/channel_names") from exc
