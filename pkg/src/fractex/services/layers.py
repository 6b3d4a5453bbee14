"""Differentiable n-D layer kernels for the segmentation network.

Every forward returns ``(output, cache)`` and every backward consumes the
cache. Arrays are channel-first: ``(channels, *spatial)``.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def block_view(a: np.ndarray, factor: int, axes: tuple[int, ...]) -> np.ndarray:
    """Reshape so each non-overlapping ``factor``-block along ``axes`` gets its own trailing axis.

    Trailing remainders that do not fill a block are dropped. The result has
    the pooled shape followed by ``len(axes)`` block axes of length ``factor``.
    """
    trimmed = a[tuple(slice(0, (n // factor) * factor) if i in axes else slice(None) for i, n in enumerate(a.shape))]
    shape = []
    for i, n in enumerate(trimmed.shape):
        shape.extend([n // factor, factor] if i in axes else [n])
    blocks = trimmed.reshape(shape)
    # positions of the block axes in the reshaped array
    block_axes = []
    offset = 0
    for i in range(a.ndim):
        if i in axes:
            block_axes.append(i + offset + 1)
            offset += 1
    return np.moveaxis(blocks, block_axes, range(-len(axes), 0))


def conv_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, tuple]:
    """'Same' zero-padded cross-correlation. ``w`` is ``(out, in, *kernel)``."""
    ndim = x.ndim - 1
    k = w.shape[2]
    p = k // 2
    xp = np.pad(x, [(0, 0)] + [(p, p)] * ndim)
    cols = sliding_window_view(xp, (k,) * ndim, axis=tuple(range(1, ndim + 1)))
    y = np.tensordot(w, cols, axes=([1, *range(2, 2 + ndim)], [0, *range(ndim + 1, 2 * ndim + 1)]))
    y += b.reshape((-1,) + (1,) * ndim)
    return y, (cols, w)


def conv_backward(dy: np.ndarray, cache: tuple) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    cols, w = cache
    ndim = dy.ndim - 1
    spatial = list(range(1, ndim + 1))
    dw = np.tensordot(dy, cols, axes=(spatial, spatial))
    db = dy.sum(axis=tuple(spatial))
    flipped = np.flip(w, axis=tuple(range(2, 2 + ndim))).swapaxes(0, 1)
    dx, _ = conv_forward(dy, flipped, np.zeros(flipped.shape[0]))
    return dx, dw, db


def relu_forward(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mask = x > 0
    return np.where(mask, x, 0.0), mask


def relu_backward(dy: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return np.where(mask, dy, 0.0)


def maxpool_forward(x: np.ndarray, factor: int = 2) -> tuple[np.ndarray, tuple]:
    """Non-overlapping max pooling; ties go to the first element of the block."""
    ndim = x.ndim - 1
    blocks = block_view(x, factor, tuple(range(1, ndim + 1)))
    flat = blocks.reshape(blocks.shape[: ndim + 1] + (-1,))
    idx = flat.argmax(axis=-1)
    y = np.take_along_axis(flat, idx[..., np.newaxis], axis=-1)[..., 0]
    return y, (x.shape, idx, factor)


def maxpool_backward(dy: np.ndarray, cache: tuple) -> np.ndarray:
    shape, idx, factor = cache
    ndim = len(shape) - 1
    flat = np.zeros(dy.shape + (factor**ndim,))
    np.put_along_axis(flat, idx[..., np.newaxis], dy[..., np.newaxis], axis=-1)
    blocks = flat.reshape(dy.shape + (factor,) * ndim)
    # interleave pooled and block axes back into the original layout
    order = [0]
    for i in range(ndim):
        order.extend([1 + i, 1 + ndim + i])
    return blocks.transpose(order).reshape(shape)


def meanpool(x: np.ndarray, factor: int) -> np.ndarray:
    if factor == 1:
        return x
    ndim = x.ndim - 1
    blocks = block_view(x, factor, tuple(range(1, ndim + 1)))
    return blocks.mean(axis=tuple(range(-ndim, 0)))


def meanpool_backward(dy: np.ndarray, factor: int) -> np.ndarray:
    if factor == 1:
        return dy
    ndim = dy.ndim - 1
    return upsample_forward(dy, factor) / factor**ndim


def upsample_forward(x: np.ndarray, factor: int = 2) -> np.ndarray:
    """Nearest-neighbour upsampling along every spatial axis."""
    for axis in range(1, x.ndim):
        x = np.repeat(x, factor, axis=axis)
    return x


def upsample_backward(dy: np.ndarray, factor: int = 2) -> np.ndarray:
    ndim = dy.ndim - 1
    return block_view(dy, factor, tuple(range(1, ndim + 1))).sum(axis=tuple(range(-ndim, 0)))


def dropout_forward(
    x: np.ndarray, rate: float, rng: np.random.Generator | None
) -> tuple[np.ndarray, np.ndarray | None]:
    """Inverted dropout; a no-op without a generator or at rate 0."""
    if rng is None or rate == 0.0:
        return x, None
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * mask, mask


def dropout_backward(dy: np.ndarray, mask: np.ndarray | None) -> np.ndarray:
    return dy if mask is None else dy * mask


def softmax(logits: np.ndarray) -> np.ndarray:
    """Softmax over the channel axis."""
    shifted = logits - logits.max(axis=0, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=0, keepdims=True)
