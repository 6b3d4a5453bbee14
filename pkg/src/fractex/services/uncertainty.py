"""Prediction uncertainty: Monte-Carlo dropout, deep ensembles and test-time augmentation.

Every method stacks per-sample probability maps and reduces them with
:func:`aggregate`, which sorts along the sample axis before a Welford pass.
The reduction order therefore never depends on the order samples arrive in,
and identical samples give a mean equal to that sample and a variance of
exactly zero. Variance is the population variance, so one sample gives zero.
"""

import logging
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from fractex.errors import ParameterError, StructureError
from fractex.models.network import NetworkParams
from fractex.models.report import UqMethod, UqResult
from fractex.models.volume import Volume
from fractex.services.segnet import fd_channel, forward
from fractex.utils.rng import make_rng

logger = logging.getLogger(__name__)

AXIS_NAMES = "xyz"


def aggregate(samples: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Elementwise mean and population variance over axis 0."""
    if samples.shape[0] < 1:
        raise ParameterError("need at least one sample to aggregate")
    ordered = np.sort(samples, axis=0)
    mean = np.zeros(ordered.shape[1:])
    m2 = np.zeros(ordered.shape[1:])
    for k, sample in enumerate(ordered, start=1):
        delta = sample - mean
        mean = mean + delta / k
        m2 = m2 + delta * (sample - mean)
    variance = np.maximum(m2 / ordered.shape[0], 0.0)
    return mean, variance


def _result(x: Volume, num_classes: int, samples: list[np.ndarray], method: UqMethod) -> UqResult:
    mean, variance = aggregate(np.stack(samples))
    reference = x.with_data(mean, channel_names=[f"class{k}" for k in range(num_classes)])
    logger.debug("%s: aggregated %d samples", method, len(samples))
    return UqResult(
        mean_prob=reference.with_data(mean),
        variance=reference.with_data(variance),
        n_samples=len(samples),
        method=method,
    )


def _input_fd(params: NetworkParams, x: Volume, fd: Volume | None) -> Volume | None:
    if params.arch.fd_channel and fd is None:
        return fd_channel(x)
    return fd


def mc_dropout_predict(
    params: NetworkParams,
    x: Volume,
    n_samples: int,
    seed: int | np.random.Generator = 0,
    fd: Volume | None = None,
) -> UqResult:
    """Average of ``n_samples`` forwards with dropout left on.

    Masks are drawn from one generator, sample after sample, in the stage
    order documented in :mod:`fractex.services.segnet`.
    """
    if n_samples < 1:
        raise ParameterError(f"n_samples must be >= 1, got {n_samples}")
    rng = make_rng(seed)
    fd = _input_fd(params, x, fd)
    samples = []
    for _ in range(n_samples):
        probs, _ = forward(params, x, stochastic=True, seed=rng, fd=fd)
        samples.append(probs.data)
    return _result(x, params.arch.num_classes, samples, UqMethod.MCDO)


def ensemble_predict(params_list: list[NetworkParams], x: Volume, fd: Volume | None = None) -> UqResult:
    """Average of the deterministic forwards of every ensemble member."""
    if not params_list:
        raise ParameterError("ensemble_predict needs at least one member")
    arch = params_list[0].arch
    for i, member in enumerate(params_list[1:], start=1):
        if member.arch != arch:
            raise StructureError(f"member {i} has a different architecture from member 0", stage="ensemble")
    fd = _input_fd(params_list[0], x, fd)
    samples = [forward(member, x, stochastic=False, fd=fd)[0].data for member in params_list]
    return _result(x, arch.num_classes, samples, UqMethod.ENSEMBLE)


# -- test-time augmentation -------------------------------------------------------------------


@dataclass(frozen=True)
class SpatialTransform:
    """An invertible map of the spatial axes of a channel-first array."""

    name: str
    apply: Callable[[np.ndarray], np.ndarray]
    invert: Callable[[np.ndarray], np.ndarray]
    plane: tuple[int, int] | None = None


def _flip(axis: int) -> SpatialTransform:
    def flip(a: np.ndarray) -> np.ndarray:
        return np.flip(a, axis=axis + 1)

    return SpatialTransform(f"flip_{AXIS_NAMES[axis]}", flip, flip)


def _rotation(quarter_turns: int) -> SpatialTransform:
    # rotations act on the plane of the first two spatial axes
    return SpatialTransform(
        f"rot{90 * quarter_turns}",
        lambda a: np.rot90(a, quarter_turns, axes=(1, 2)),
        lambda a: np.rot90(a, -quarter_turns, axes=(1, 2)),
        plane=(0, 1),
    )


TRANSFORMS: dict[str, SpatialTransform] = {
    "identity": SpatialTransform("identity", lambda a: a, lambda a: a),
    **{t.name: t for t in (_flip(0), _flip(1), _flip(2))},
    **{t.name: t for t in (_rotation(1), _rotation(2), _rotation(3))},
}


def default_transforms(ndim: int) -> list[str]:
    """Identity plus one flip per spatial axis."""
    return ["identity", *(f"flip_{AXIS_NAMES[a]}" for a in range(ndim))]


def resolve_transforms(names: list[str], shape: tuple[int, ...]) -> list[SpatialTransform]:
    """Look up registered transforms and check they map ``shape`` onto itself."""
    if not names:
        raise ParameterError("at least one transform is required")
    resolved = []
    for name in names:
        transform = TRANSFORMS.get(name)
        if transform is None:
            raise ParameterError(f"transform {name!r} has no registered inverse; choose from {sorted(TRANSFORMS)}")
        if name.startswith("flip_") and AXIS_NAMES.index(name[-1]) >= len(shape):
            raise ParameterError(f"{name} needs a spatial axis {name[-1]}, input has {len(shape)} axes")
        if transform.plane is not None:
            if len(shape) < 2:
                raise ParameterError(f"{name} needs at least two spatial axes")
            a, b = transform.plane
            if shape[a] != shape[b] and name != "rot180":
                raise ParameterError(f"{name} needs a square plane, got {shape[a]}x{shape[b]}")
        resolved.append(transform)
    return resolved


def _augmented(
    params: NetworkParams,
    x: Volume,
    transforms: list[SpatialTransform],
    fd: Volume | None,
    draws: int,
    rng: np.random.Generator | None,
) -> list[np.ndarray]:
    samples = []
    for transform in transforms:
        tx = x.with_data(np.ascontiguousarray(transform.apply(x.data)))
        tfd = fd.with_data(np.ascontiguousarray(transform.apply(fd.data))) if fd is not None else None
        for _ in range(draws):
            probs, _ = forward(params, tx, stochastic=rng is not None, seed=rng, fd=tfd)
            samples.append(np.ascontiguousarray(transform.invert(probs.data)))
    return samples


def tta_predict(
    params: NetworkParams,
    x: Volume,
    transforms: list[str] | None = None,
    fd: Volume | None = None,
) -> UqResult:
    """Forward every transformed input, map the probabilities back and average.

    The FD channel is computed once on the untransformed input and transformed
    along with it.
    """
    names = transforms or default_transforms(x.ndim)
    resolved = resolve_transforms(names, x.shape)
    fd = _input_fd(params, x, fd)
    samples = _augmented(params, x, resolved, fd, 1, None)
    return _result(x, params.arch.num_classes, samples, UqMethod.TTA)


def combined_predict(
    params: NetworkParams,
    x: Volume,
    n_samples: int,
    transforms: list[str] | None = None,
    seed: int | np.random.Generator = 0,
    fd: Volume | None = None,
) -> UqResult:
    """MC dropout under every test-time transform, drawn from one generator."""
    if n_samples < 1:
        raise ParameterError(f"n_samples must be >= 1, got {n_samples}")
    resolved = resolve_transforms(transforms or default_transforms(x.ndim), x.shape)
    fd = _input_fd(params, x, fd)
    samples = _augmented(params, x, resolved, fd, n_samples, make_rng(seed))
    return _result(x, params.arch.num_classes, samples, UqMethod.COMBINED)


def predictive_entropy(mean_prob: Volume) -> Volume:
    """Per-pixel entropy ``-sum_k p_k log p_k`` of a mean probability map."""
    p = np.clip(mean_prob.data, 1e-12, 1.0)
    entropy = -np.sum(mean_prob.data * np.log(p), axis=0, keepdims=True)
    return mean_prob.with_data(entropy, channel_names=["entropy"])
