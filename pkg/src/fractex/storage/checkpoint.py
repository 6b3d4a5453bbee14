"""Model checkpoint container.

Layout: the magic line ``FRACTEXCKPT\\n``, the header length as an unsigned
64-bit little-endian integer, a compact sorted-key JSON header (format
version, architecture, init seed and a tensor table), then every tensor as
little-endian float32 in table order. The same parameters always produce the
same bytes.
"""

import json
import struct
from pathlib import Path

import numpy as np

from fractex.errors import DataError, FractexError
from fractex.models.network import ArchSpec, NetworkParams
from fractex.services.segnet import audit_params
from fractex.utils.atomic import atomic_write_bytes

MAGIC = b"FRACTEXCKPT\n"
CHECKPOINT_FORMAT_VERSION = 1
_LENGTH = struct.Struct("<Q")
_FLOAT = np.dtype("<f4")


def checkpoint_bytes(params: NetworkParams) -> bytes:
    table = []
    offset = 0
    for name in params.names:
        tensor = params[name]
        table.append({"name": name, "shape": list(tensor.shape), "offset": offset, "count": int(tensor.size)})
        offset += int(tensor.size)
    header = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "arch": params.arch.to_dict(),
        "init_seed": int(params.init_seed),
        "tensors": table,
    }
    encoded = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    payload = b"".join(np.ascontiguousarray(params[name], dtype=_FLOAT).tobytes() for name in params.names)
    return MAGIC + _LENGTH.pack(len(encoded)) + encoded + payload


def save_checkpoint(params: NetworkParams, path: Path | str) -> Path:
    return atomic_write_bytes(Path(path), checkpoint_bytes(params))


def load_checkpoint(path: Path | str) -> NetworkParams:
    """Read a checkpoint back into float64 parameters and audit their shapes."""
    path = Path(path)
    if not path.exists():
        raise DataError("checkpoint not found", path=path)
    blob = path.read_bytes()
    if not blob.startswith(MAGIC):
        raise DataError("not a fractex checkpoint", path=path, field="magic")
    start = len(MAGIC) + _LENGTH.size
    if len(blob) < start:
        raise DataError("truncated checkpoint header", path=path, field="header")
    (length,) = _LENGTH.unpack_from(blob, len(MAGIC))
    try:
        header = json.loads(blob[start : start + length].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError("checkpoint header is not valid JSON", path=path, field="header") from exc

    version = header.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise DataError(f"unsupported format version {version}", path=path, field="format_version")
    try:
        arch = ArchSpec.from_dict(header["arch"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"invalid architecture: {exc}", path=path, field="arch") from exc

    if (len(blob) - start - length) % _FLOAT.itemsize:
        raise DataError("payload is not a whole number of float32 values", path=path, field="payload")
    payload = np.frombuffer(blob, dtype=_FLOAT, offset=start + length)
    tensors = {}
    for entry in header.get("tensors", []):
        begin, count = entry["offset"], entry["count"]
        if begin + count > payload.size:
            raise DataError(f"tensor {entry['name']} runs past the payload", path=path, field="tensors")
        tensors[entry["name"]] = payload[begin : begin + count].astype(np.float64).reshape(entry["shape"])
    expected_floats = sum(entry["count"] for entry in header.get("tensors", []))
    if payload.size != expected_floats:
        message = f"payload holds {payload.size} floats, table lists {expected_floats}"
        raise DataError(message, path=path, field="payload")

    params = NetworkParams(tensors=tensors, arch=arch, init_seed=int(header.get("init_seed", 0)))
    try:
        audit_params(params)
    except FractexError as exc:
        raise DataError(str(exc), path=path, field="tensors") from exc
    return params
