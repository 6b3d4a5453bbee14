"""Adam training loop, deep-ensemble training and held-out evaluation."""

import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from fractex.errors import NumericalError, ParameterError
from fractex.models.hurst import FdOptions
from fractex.models.network import ArchSpec, NetworkParams, TrainConfig, TrainingLog
from fractex.models.volume import Volume
from fractex.services.metrics import foreground_dice
from fractex.services.segnet import backward, fd_channel, forward, init_params, loss, predict
from fractex.utils.rng import derive_seeds, make_rng

logger = logging.getLogger(__name__)


@dataclass
class Sample:
    """One training or evaluation case: image, class-index labels and an optional FD map."""

    image: Volume
    labels: Volume
    fd: Volume | None = None
    case_id: str = "case"


def prepare_samples(
    images: list[Volume],
    labels: list[Volume],
    arch: ArchSpec,
    case_ids: list[str] | None = None,
    fd_options: FdOptions | None = None,
) -> list[Sample]:
    """Pair images with labels and precompute the FD channel when the architecture uses one."""
    if len(images) != len(labels):
        raise ParameterError(f"{len(images)} images but {len(labels)} label maps")
    case_ids = case_ids or [f"case_{i:03d}" for i in range(len(images))]
    samples = []
    for image, label, case_id in zip(images, labels, case_ids, strict=True):
        fd = fd_channel(image, fd_options) if arch.fd_channel else None
        samples.append(Sample(image=image, labels=label, fd=fd, case_id=case_id))
    return samples


class AdamOptimizer:
    """Adam with bias correction and L2 weight decay folded into the gradient."""

    def __init__(self, params: NetworkParams, config: TrainConfig) -> None:
        self.params = params
        self.config = config
        self.t = 0
        self.m = {name: np.zeros_like(t) for name, t in params.tensors.items()}
        self.v = {name: np.zeros_like(t) for name, t in params.tensors.items()}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        c = self.config
        self.t += 1
        correction1 = 1.0 - c.beta1**self.t
        correction2 = 1.0 - c.beta2**self.t
        for name, theta in self.params.tensors.items():
            g = grads[name]
            if c.weight_decay:
                g = g + c.weight_decay * theta
            self.m[name] = c.beta1 * self.m[name] + (1.0 - c.beta1) * g
            self.v[name] = c.beta2 * self.v[name] + (1.0 - c.beta2) * g * g
            m_hat = self.m[name] / correction1
            v_hat = self.v[name] / correction2
            theta -= c.learning_rate * m_hat / (np.sqrt(v_hat) + c.epsilon)
        self.params.version += 1


class SegmentationTrainer:
    """Runs ``epochs`` passes of minibatch Adam over a sample list.

    Initial weights and the sampling stream (epoch shuffles and dropout masks)
    use two independent seeds derived from ``config.seed``, so a run is a pure
    function of the config, the architecture and the samples.
    """

    def __init__(self, config: TrainConfig, arch: ArchSpec, init_seed: int | None = None) -> None:
        self.config = config
        self.arch = arch
        derived_init, self.stream_seed = derive_seeds(config.seed, 2)
        self.init_seed = derived_init if init_seed is None else init_seed

    def fit(self, samples: list[Sample], test_samples: list[Sample] | None = None) -> tuple[NetworkParams, TrainingLog]:
        """Train from a fresh initialisation.

        Args:
            samples: Training cases; every image must match ``arch.input_shape``
            test_samples: Optional held-out cases scored with foreground Dice

        Returns:
            The trained parameters and the per-epoch training log
        """
        if not samples:
            raise ParameterError("training needs at least one sample")
        config = self.config
        params = init_params(self.arch, self.init_seed)
        optimizer = AdamOptimizer(params, config)
        rng = make_rng(self.stream_seed)
        log = TrainingLog()
        logger.info(
            "training %d parameters on %d samples for %d epochs",
            params.num_parameters,
            len(samples),
            config.epochs,
        )

        for epoch in range(1, config.epochs + 1):
            order = rng.permutation(len(samples))
            losses = []
            for start in range(0, len(order), config.batch_size):
                batch = [samples[i] for i in order[start : start + config.batch_size]]
                batch_loss, grads = self._batch_gradients(params, batch, rng, log.steps)
                optimizer.step(grads)
                log.steps += 1
                losses.append(batch_loss)
            epoch_loss = float(np.mean(losses))
            log.epoch_losses.append(epoch_loss)
            logger.info("epoch %d/%d: mean loss %.6f", epoch, config.epochs, epoch_loss)

        if test_samples:
            log.test_dice = evaluate_dataset(params, test_samples)
            logger.info("held-out foreground Dice %.4f over %d cases", log.test_dice, len(test_samples))
        return params, log

    def _batch_gradients(
        self, params: NetworkParams, batch: list[Sample], rng: np.random.Generator, step: int
    ) -> tuple[float, dict[str, np.ndarray]]:
        weights = self.config.loss_weights
        total = {name: np.zeros_like(t) for name, t in params.tensors.items()}
        batch_loss = 0.0
        for sample in batch:
            try:
                probs, cache = forward(params, sample.image, stochastic=True, seed=rng, fd=sample.fd)
            except NumericalError as exc:
                raise NumericalError(f"training diverged: {exc}", stage=exc.stage, step=step) from exc
            value = loss(probs, sample.labels, cache.se_logits, weights)
            if not math.isfinite(value):
                raise NumericalError("training diverged: loss is not finite", stage="loss", step=step)
            batch_loss += value
            for name, g in backward(params, cache, sample.labels, weights).items():
                total[name] += g
        n = len(batch)
        return batch_loss / n, {name: g / n for name, g in total.items()}


def train(
    config: TrainConfig,
    arch: ArchSpec,
    samples: list[Sample],
    test_samples: list[Sample] | None = None,
) -> tuple[NetworkParams, TrainingLog]:
    """Train one network; initial weights and the sampling stream derive from ``config.seed``."""
    return SegmentationTrainer(config, arch).fit(samples, test_samples)


def train_ensemble(
    config: TrainConfig,
    arch: ArchSpec,
    samples: list[Sample],
    members: int,
    test_samples: list[Sample] | None = None,
) -> list[tuple[NetworkParams, TrainingLog]]:
    """Train ``members`` networks that differ only in their derived seeds."""
    if members < 1:
        raise ParameterError(f"members must be >= 1, got {members}")
    results = []
    for index, seed in enumerate(derive_seeds(config.seed, members)):
        logger.info("ensemble member %d/%d (seed %d)", index + 1, members, seed)
        results.append(SegmentationTrainer(replace(config, seed=seed), arch).fit(samples, test_samples))
    return results


def evaluate_dataset(params: NetworkParams, samples: list[Sample]) -> float:
    """Mean foreground Dice of the deterministic predictions."""
    if not samples:
        raise ParameterError("evaluation needs at least one sample")
    scores = [foreground_dice(predict(params, s.image, fd=s.fd), s.labels) for s in samples]
    return float(np.mean(scores))
