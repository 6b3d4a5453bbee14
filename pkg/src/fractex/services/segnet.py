"""Wavelet + FD U-Net: forward pass, losses, backward pass and readout.

Stage wiring for an input of spatial shape ``S`` with ``L`` wavelet levels:

1. DWT of every modality to ``L`` levels; every subband is brought onto the
   finest subband grid ``G = S / 2`` (coarser bands by nearest-neighbour
   upsampling) and stacked as channels, approximation first. The FD map,
   centred by ``n + 0.5`` and mean-pooled onto ``G``, is appended.
2. Encoder stages ``conv-relu-conv-relu-dropout`` followed by 2x max pooling,
   a bottleneck of the same form, and decoder stages
   ``upsample-conv-relu``, skip concatenation, ``conv-relu-conv-relu-dropout``.
3. A 1x1 head predicts one full subband set per class; mean pooling returns
   each band to its own grid and the inverse DWT gives the class logit map.
4. Softmax over classes. The SE head reads the globally averaged bottleneck.

With ``L = 0`` the wavelet stages disappear and the network is a plain U-Net.
Dropout masks are drawn in stage order enc0..enc{D-1}, bottleneck,
dec{D-1}..dec0 from a single generator.
"""

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any

import numpy as np
from scipy.special import expit

from fractex.errors import NumericalError, ParameterError, StructureError
from fractex.models.hurst import FdOptions
from fractex.models.network import ArchSpec, NetworkParams
from fractex.models.volume import Volume
from fractex.models.wavelet import Boundary, Subbands, WaveletFamily, WaveletSpec
from fractex.services import layers
from fractex.services.fractal import fd_map
from fractex.services.wavelet import dwt_forward, dwt_inverse, orientation_keys
from fractex.utils.rng import make_rng

EPSILON = 1e-7


@dataclass(frozen=True)
class StageShape:
    stage: str
    shape: tuple[int, ...]


@lru_cache(maxsize=64)
def shape_audit(arch: ArchSpec) -> tuple[StageShape, ...]:
    """Expected tensor shape at every stage; raises on the first inconsistent stage."""
    d = arch.ndim
    levels = arch.wavelet_levels
    if levels > 0 and arch.wavelet.boundary != Boundary.PERIODIC:
        raise StructureError("the in-network wavelet stage needs the periodic boundary", stage="wavelet")
    # the encoder runs on the finest subband grid, one halving below the input when levels > 0
    block = 2 ** max(levels, arch.depth + (1 if levels > 0 else 0))
    if any(n % block for n in arch.input_shape):
        raise StructureError(
            f"input dims {arch.input_shape} are not divisible by {block} (depth {arch.depth}, wavelet levels {levels})",
            stage="input",
        )

    table = [StageShape("input", (arch.in_channels, *arch.input_shape))]
    grid = arch.working_shape
    if levels > 0:
        table.append(StageShape("subbands", (arch.in_channels * arch.bands_per_channel, *grid)))
    if arch.fd_channel:
        table.append(StageShape("fd", (1, *grid)))
    table.append(StageShape("encoder_input", (arch.encoder_in_channels, *grid)))
    for i in range(arch.depth):
        if any(n % 2 for n in grid):
            raise StructureError(f"grid {grid} cannot be pooled; depth {arch.depth} is too large", stage=f"enc{i}")
        table.append(StageShape(f"enc{i}", (arch.filters(i), *grid)))
        grid = tuple(n // 2 for n in grid)
        table.append(StageShape(f"pool{i}", (arch.filters(i), *grid)))
    if any(n < 1 for n in grid):
        raise StructureError(f"bottleneck grid {grid} is empty", stage="bottleneck")
    table.append(StageShape("bottleneck", (arch.filters(arch.depth), *grid)))
    for i in reversed(range(arch.depth)):
        grid = tuple(n * 2 for n in grid)
        table.append(StageShape(f"dec{i}", (arch.filters(i), *grid)))
    table.append(StageShape("head", (arch.head_channels, *grid)))
    table.append(StageShape("logits", (arch.num_classes, *arch.input_shape)))
    if arch.se_head:
        table.append(StageShape("se", (arch.num_classes,)))
    return tuple(table)


def param_shapes(arch: ArchSpec) -> dict[str, tuple[int, ...]]:
    """Name and shape of every parameter tensor, in a fixed order."""
    shape_audit(arch)
    kernel = (arch.kernel_size,) * arch.ndim
    shapes: dict[str, tuple[int, ...]] = {}

    def conv(name: str, c_out: int, c_in: int, k: tuple[int, ...] = kernel) -> None:
        shapes[f"{name}.w"] = (c_out, c_in, *k)
        shapes[f"{name}.b"] = (c_out,)

    c_in = arch.encoder_in_channels
    for i in range(arch.depth):
        conv(f"enc{i}.conv0", arch.filters(i), c_in)
        conv(f"enc{i}.conv1", arch.filters(i), arch.filters(i))
        c_in = arch.filters(i)
    conv("bott.conv0", arch.filters(arch.depth), c_in)
    conv("bott.conv1", arch.filters(arch.depth), arch.filters(arch.depth))
    for i in reversed(range(arch.depth)):
        conv(f"dec{i}.up", arch.filters(i), arch.filters(i + 1))
        conv(f"dec{i}.conv0", arch.filters(i), 2 * arch.filters(i))
        conv(f"dec{i}.conv1", arch.filters(i), arch.filters(i))
    conv("head", arch.head_channels, arch.filters(0), (1,) * arch.ndim)
    if arch.se_head:
        shapes["se.w"] = (arch.num_classes, arch.filters(arch.depth))
        shapes["se.b"] = (arch.num_classes,)
    return shapes


def init_params(arch: ArchSpec, seed: int = 0) -> NetworkParams:
    """Centred uniform weights scaled by fan-in, zero biases."""
    rng = make_rng(seed)
    tensors = {}
    for name, shape in param_shapes(arch).items():
        if name.endswith(".w"):
            fan_in = int(np.prod(shape[1:]))
            limit = np.sqrt(6.0 / fan_in)
            tensors[name] = rng.uniform(-limit, limit, size=shape)
        else:
            tensors[name] = np.zeros(shape)
    return NetworkParams(tensors=tensors, arch=arch, init_seed=seed)


def audit_params(params: NetworkParams) -> None:
    """Raise StructureError if any tensor disagrees with the architecture."""
    expected = param_shapes(params.arch)
    if list(expected) != params.names:
        missing = sorted(set(expected) - set(params.names))
        extra = sorted(set(params.names) - set(expected))
        raise StructureError(f"parameter names differ from the architecture (missing {missing}, extra {extra})")
    for name, shape in expected.items():
        if params[name].shape != shape:
            raise StructureError(f"{name} has shape {params[name].shape}, expected {shape}", stage=name.split(".")[0])


# -- wavelet stages ---------------------------------------------------------------------------


def _band_factors(arch: ArchSpec) -> list[int]:
    """Upsampling factor from each band's grid to the working grid, in channel order."""
    levels = arch.wavelet_levels
    factors = [2 ** (levels - 1)]
    for level in range(1, levels + 1):
        factors.extend([2 ** (level - 1)] * (2**arch.ndim - 1))
    return factors


def subbands_to_channels(sb: Subbands, arch: ArchSpec) -> np.ndarray:
    """Stack approximation and details on the working grid, band-major."""
    bands = [sb.approx.data]
    for level in sb.details:
        bands.extend(level[key].data for key in orientation_keys(arch.ndim))
    return np.concatenate(
        [layers.upsample_forward(band, f) for band, f in zip(bands, _band_factors(arch), strict=True)], axis=0
    )


def channels_to_subbands(channels: np.ndarray, arch: ArchSpec, input_shape: tuple[int, ...]) -> Subbands:
    """Inverse of :func:`subbands_to_channels` for a single-channel band set."""
    factors = _band_factors(arch)
    bands = [layers.meanpool(channels[b : b + 1], f) for b, f in enumerate(factors)]
    keys = orientation_keys(arch.ndim)
    details = []
    cursor = 1
    for level in range(1, arch.wavelet_levels + 1):
        details.append({key: Volume(bands[cursor + i]) for i, key in enumerate(keys)})
        cursor += len(keys)
    return Subbands(Volume(bands[0]), details, arch.wavelet, arch.wavelet_levels, tuple(input_shape))


def _channels_to_subbands_adjoint(sb: Subbands, arch: ArchSpec) -> np.ndarray:
    bands = [sb.approx.data]
    for level in sb.details:
        bands.extend(level[key].data for key in orientation_keys(arch.ndim))
    return np.concatenate(
        [layers.meanpool_backward(band, f) for band, f in zip(bands, _band_factors(arch), strict=True)], axis=0
    )


def wavelet_passthrough(x: Volume, arch: ArchSpec) -> Volume:
    """Encoder wavelet stage followed directly by the output wavelet stage, per modality."""
    sb = dwt_forward(x, arch.wavelet, arch.wavelet_levels)
    stacked = subbands_to_channels(sb, arch)
    bands = arch.bands_per_channel
    out = []
    for c in range(x.channels):
        per_channel = stacked[c::x.channels][:bands]
        out.append(dwt_inverse(channels_to_subbands(per_channel, arch, x.shape)).data)
    return x.with_data(np.concatenate(out, axis=0))


def fd_channel(x: Volume, options: FdOptions | None = None) -> Volume:
    """FD map of the first modality used as the extra input channel."""
    options = options or FdOptions()
    smallest = min(x.shape)
    if smallest < 8:
        raise ParameterError(f"the FD channel needs every spatial dim >= 8, got {x.shape}")
    window = min(options.window, 2 ** int(np.floor(np.log2(smallest))))
    spec = WaveletSpec(WaveletFamily(options.family), Boundary(options.boundary))
    first = x.with_data(x.data[:1].astype(np.float64))
    return fd_map(first, window, min(options.stride, window), spec, options.scales, options.q, options.mode)


# -- forward ----------------------------------------------------------------------------------


@dataclass
class ForwardCache:
    """Everything :func:`backward` needs from one forward pass."""

    arch: ArchSpec
    params_version: int
    params_id: int
    input_shape: tuple[int, ...]
    probs: np.ndarray
    se_logits: np.ndarray | None
    layers: dict[str, Any] = field(default_factory=dict)


def _check_finite(a: np.ndarray, stage: str) -> None:
    if not np.all(np.isfinite(a)):
        raise NumericalError("non-finite values", stage=stage)


def _encode_input(x: Volume, arch: ArchSpec, fd: Volume | None) -> np.ndarray:
    data = x.data.astype(np.float64)
    if arch.wavelet_levels > 0:
        feats = subbands_to_channels(dwt_forward(x.with_data(data), arch.wavelet, arch.wavelet_levels), arch)
        _check_finite(feats, "subbands")
    else:
        feats = data
    if arch.fd_channel:
        fd = fd if fd is not None else fd_channel(x)
        if fd.shape != x.shape:
            raise StructureError(f"FD map shape {fd.shape} does not match input {x.shape}", stage="fd")
        centred = fd.data[:1].astype(np.float64) - (arch.ndim + 0.5)
        pooled = layers.meanpool(centred, 2 if arch.wavelet_levels > 0 else 1)
        _check_finite(pooled, "fd")
        feats = np.concatenate([feats, pooled], axis=0)
    return feats


def _conv_relu(params: NetworkParams, name: str, h: np.ndarray, cache: dict) -> np.ndarray:
    h, cache[f"{name}.conv"] = layers.conv_forward(h, params[f"{name}.w"], params[f"{name}.b"])
    h, cache[f"{name}.relu"] = layers.relu_forward(h)
    return h


def _block(params: NetworkParams, stage: str, h: np.ndarray, cache: dict, rng, rate: float) -> np.ndarray:
    h = _conv_relu(params, f"{stage}.conv0", h, cache)
    h = _conv_relu(params, f"{stage}.conv1", h, cache)
    h, cache[f"{stage}.dropout"] = layers.dropout_forward(h, rate, rng)
    _check_finite(h, stage)
    return h


def forward(
    params: NetworkParams,
    x: Volume,
    stochastic: bool = False,
    seed: int | np.random.Generator | None = None,
    fd: Volume | None = None,
) -> tuple[Volume, ForwardCache]:
    """Per-pixel class probabilities and the cache for :func:`backward`.

    Dropout is active only when ``stochastic`` is set; its masks come from ``seed``.
    """
    arch = params.arch
    shape_audit(arch)
    if x.channels != arch.in_channels or x.shape != arch.input_shape:
        raise StructureError(
            f"input {(x.channels, *x.shape)} does not match architecture {(arch.in_channels, *arch.input_shape)}",
            stage="input",
        )
    rng = make_rng(seed) if stochastic else None
    rate = arch.dropout_rate
    cache: dict[str, Any] = {}

    h = _encode_input(x, arch, fd)
    skips = []
    for i in range(arch.depth):
        h = _block(params, f"enc{i}", h, cache, rng, rate)
        skips.append(h)
        h, cache[f"pool{i}"] = layers.maxpool_forward(h)
    h = _block(params, "bott", h, cache, rng, rate)

    se_logits = None
    if arch.se_head:
        pooled = h.reshape(h.shape[0], -1).mean(axis=1)
        cache["se.input"] = (pooled, h.shape)
        se_logits = params["se.w"] @ pooled + params["se.b"]
        _check_finite(se_logits, "se")

    for i in reversed(range(arch.depth)):
        h = layers.upsample_forward(h)
        h = _conv_relu(params, f"dec{i}.up", h, cache)
        cache[f"dec{i}.split"] = h.shape[0]
        h = np.concatenate([h, skips[i]], axis=0)
        h = _block(params, f"dec{i}", h, cache, rng, rate)

    head, cache["head.conv"] = layers.conv_forward(h, params["head.w"], params["head.b"])
    _check_finite(head, "head")

    if arch.wavelet_levels > 0:
        bands = arch.bands_per_channel
        logits = np.concatenate(
            [
                dwt_inverse(channels_to_subbands(head[k * bands : (k + 1) * bands], arch, x.shape)).data
                for k in range(arch.num_classes)
            ],
            axis=0,
        )
    else:
        logits = head
    _check_finite(logits, "logits")
    probs = layers.softmax(logits)
    _check_finite(probs, "softmax")

    result = ForwardCache(arch, params.version, id(params), x.shape, probs, se_logits, cache)
    names = [f"class{k}" for k in range(arch.num_classes)]
    return Volume(probs, spacing=x.spacing, channel_names=names, attrs=dict(x.attrs)), result


# -- loss -------------------------------------------------------------------------------------


def _class_indices(labels: Volume | np.ndarray, num_classes: int, spatial: tuple[int, ...]) -> np.ndarray:
    """Integer class map from an index map ``(*S)``/``(1, *S)`` or a one-hot ``(K, *S)``."""
    data = labels.data if isinstance(labels, Volume) else np.asarray(labels)
    if data.shape == (num_classes, *spatial) and num_classes > 1:
        return np.argmax(data, axis=0)
    if data.shape == (1, *spatial):
        data = data[0]
    if data.shape != spatial:
        raise StructureError(f"labels of shape {data.shape} do not match spatial shape {spatial}", stage="labels")
    indices = data.astype(np.int64)
    if indices.min() < 0 or indices.max() >= num_classes:
        raise StructureError(f"label values must lie in 0..{num_classes - 1}", stage="labels")
    return indices


def _one_hot(indices: np.ndarray, num_classes: int) -> np.ndarray:
    return (np.arange(num_classes).reshape((-1,) + (1,) * indices.ndim) == indices[np.newaxis]).astype(np.float64)


def presence_targets(indices: np.ndarray, num_classes: int) -> np.ndarray:
    """Per-class binary presence of each class in a label map."""
    return np.array([float(np.any(indices == k)) for k in range(num_classes)])


def loss(
    probabilities: Volume | np.ndarray,
    labels: Volume | np.ndarray,
    class_presence_logits: np.ndarray | None = None,
    loss_weights: tuple[float, float] = (1.0, 0.0),
) -> float:
    """``ce * CE + se * SE`` with probabilities clamped to ``[eps, 1 - eps]``.

    CE is the multi-class cross-entropy averaged over pixels (the binary
    cross-entropy when there are two classes); SE is the binary cross-entropy
    of the sigmoid presence head against per-class presence.
    """
    probs = probabilities.data if isinstance(probabilities, Volume) else np.asarray(probabilities)
    num_classes = probs.shape[0]
    indices = _class_indices(labels, num_classes, probs.shape[1:])
    target = _one_hot(indices, num_classes)
    clamped = np.clip(probs, EPSILON, 1.0 - EPSILON)
    n_pixels = indices.size
    ce = float(-np.sum(target * np.log(clamped)) / n_pixels)
    ce_weight, se_weight = loss_weights
    total = ce_weight * ce
    if se_weight and class_presence_logits is not None:
        logits = np.asarray(class_presence_logits, dtype=np.float64)
        if logits.shape != (num_classes,):
            raise StructureError(f"presence logits shape {logits.shape}, expected {(num_classes,)}", stage="se")
        presence = np.clip(expit(logits), EPSILON, 1.0 - EPSILON)
        t = presence_targets(indices, num_classes)
        se = float(-np.mean(t * np.log(presence) + (1.0 - t) * np.log(1.0 - presence)))
        total += se_weight * se
    return total


# -- backward ---------------------------------------------------------------------------------


def _conv_relu_backward(name: str, dh: np.ndarray, cache: dict, grads: dict) -> np.ndarray:
    dh = layers.relu_backward(dh, cache[f"{name}.relu"])
    dh, grads[f"{name}.w"], grads[f"{name}.b"] = layers.conv_backward(dh, cache[f"{name}.conv"])
    return dh


def _block_backward(stage: str, dh: np.ndarray, cache: dict, grads: dict) -> np.ndarray:
    dh = layers.dropout_backward(dh, cache[f"{stage}.dropout"])
    dh = _conv_relu_backward(f"{stage}.conv1", dh, cache, grads)
    return _conv_relu_backward(f"{stage}.conv0", dh, cache, grads)


def backward(
    params: NetworkParams,
    cache: ForwardCache,
    labels: Volume | np.ndarray,
    loss_weights: tuple[float, float] = (1.0, 0.0),
) -> dict[str, np.ndarray]:
    """Gradients of :func:`loss` with respect to every parameter tensor."""
    arch = params.arch
    if cache.arch != arch or cache.params_id != id(params) or cache.params_version != params.version:
        raise StructureError("forward cache does not belong to these parameters (stale or mismatched)", stage="cache")
    ce_weight, se_weight = loss_weights
    probs = cache.probs
    num_classes = arch.num_classes
    indices = _class_indices(labels, num_classes, probs.shape[1:])
    target = _one_hot(indices, num_classes)
    store = cache.layers
    grads: dict[str, np.ndarray] = {}

    # d(CE)/dp is zero where the clamp is active
    inside = (probs > EPSILON) & (probs < 1.0 - EPSILON)
    dprobs = np.where(inside, -target / np.where(inside, probs, 1.0), 0.0) * (ce_weight / indices.size)
    dlogits = probs * (dprobs - np.sum(probs * dprobs, axis=0, keepdims=True))

    if arch.wavelet_levels > 0:
        dhead = np.concatenate(
            [
                _channels_to_subbands_adjoint(
                    dwt_forward(Volume(dlogits[k : k + 1]), arch.wavelet, arch.wavelet_levels), arch
                )
                for k in range(num_classes)
            ],
            axis=0,
        )
    else:
        dhead = dlogits
    dh, grads["head.w"], grads["head.b"] = layers.conv_backward(dhead, store["head.conv"])

    dskips: dict[int, np.ndarray] = {}
    for i in range(arch.depth):
        dh = _block_backward(f"dec{i}", dh, store, grads)
        split = store[f"dec{i}.split"]
        dskips[i] = dh[split:]
        dh = _conv_relu_backward(f"dec{i}.up", dh[:split], store, grads)
        dh = layers.upsample_backward(dh)

    if arch.se_head:
        pooled, bott_shape = store["se.input"]
        t = presence_targets(indices, num_classes)
        presence = expit(cache.se_logits)
        unclamped = (presence > EPSILON) & (presence < 1.0 - EPSILON)
        dse = np.where(unclamped, se_weight * (presence - t) / num_classes, 0.0)
        grads["se.w"] = np.outer(dse, pooled)
        grads["se.b"] = dse
        n_cells = int(np.prod(bott_shape[1:]))
        dh = dh + (params["se.w"].T @ dse).reshape((-1,) + (1,) * arch.ndim) / n_cells

    dh = _block_backward("bott", dh, store, grads)
    for i in reversed(range(arch.depth)):
        dh = layers.maxpool_backward(dh, store[f"pool{i}"]) + dskips[i]
        dh = _block_backward(f"enc{i}", dh, store, grads)

    return {name: grads[name] for name in params.names}


# -- readout ----------------------------------------------------------------------------------


def predict(params: NetworkParams, x: Volume, fd: Volume | None = None) -> Volume:
    """Per-pixel argmax of the deterministic forward; ties go to the lower class index."""
    probs, _ = forward(params, x, stochastic=False, fd=fd)
    labels = np.argmax(probs.data, axis=0).astype(np.uint8)
    return Volume(labels[np.newaxis], spacing=x.spacing, channel_names=["labels"], attrs=dict(x.attrs))
