"""Tests for MC dropout, ensembles and test-time augmentation."""

from dataclasses import replace

import numpy as np
import pytest

from fractex.errors import ParameterError, StructureError
from fractex.models.network import ArchSpec
from fractex.models.report import UqMethod
from fractex.models.volume import Volume
from fractex.services.segnet import forward, init_params
from fractex.services.uncertainty import (
    TRANSFORMS,
    aggregate,
    combined_predict,
    default_transforms,
    ensemble_predict,
    mc_dropout_predict,
    predictive_entropy,
    resolve_transforms,
    tta_predict,
)


@pytest.fixture
def params(toy_arch):
    return init_params(toy_arch, 21)


class TestAggregate:
    def test_identical_samples(self, rng):
        sample = rng.random((2, 4, 4))
        mean, variance = aggregate(np.stack([sample] * 5))
        assert np.array_equal(mean, sample)
        assert np.all(variance == 0.0)

    def test_population_variance(self):
        mean, variance = aggregate(np.array([[0.0], [1.0], [2.0], [3.0]]))
        assert mean[0] == pytest.approx(1.5)
        assert variance[0] == pytest.approx(1.25)

    def test_order_independent(self, rng):
        samples = rng.random((7, 3, 3))
        a = aggregate(samples)
        b = aggregate(samples[rng.permutation(7)])
        assert np.array_equal(a[0], b[0])
        assert np.array_equal(a[1], b[1])

    def test_needs_a_sample(self):
        with pytest.raises(ParameterError):
            aggregate(np.zeros((0, 2)))


class TestMcDropout:
    def test_rate_zero_matches_deterministic_forward(self, toy_arch, toy_input, toy_fd):
        params = init_params(replace(toy_arch, dropout_rate=0.0), 22)
        result = mc_dropout_predict(params, toy_input, 8, seed=1, fd=toy_fd)
        plain, _ = forward(params, toy_input, fd=toy_fd)
        assert np.array_equal(result.mean_prob.data, plain.data)
        assert np.all(result.variance.data == 0.0)

    def test_single_sample(self, params, toy_input, toy_fd):
        result = mc_dropout_predict(params, toy_input, 1, seed=9, fd=toy_fd)
        single, _ = forward(params, toy_input, stochastic=True, seed=9, fd=toy_fd)
        assert np.array_equal(result.mean_prob.data, single.data)
        assert np.all(result.variance.data == 0.0)
        assert result.n_samples == 1

    def test_seeded_and_normalised(self, params, toy_input, toy_fd):
        a = mc_dropout_predict(params, toy_input, 6, seed=3, fd=toy_fd)
        b = mc_dropout_predict(params, toy_input, 6, seed=3, fd=toy_fd)
        assert np.array_equal(a.mean_prob.data, b.mean_prob.data)
        assert np.allclose(a.mean_prob.data.sum(axis=0), 1.0, atol=1e-6)
        assert np.all(a.variance.data >= 0.0)
        assert a.variance.data.max() > 0.0
        assert a.method == UqMethod.MCDO

    def test_rejects_zero_samples(self, params, toy_input, toy_fd):
        with pytest.raises(ParameterError):
            mc_dropout_predict(params, toy_input, 0, fd=toy_fd)

    @pytest.mark.slow
    def test_standard_error_shrinks(self, params, toy_input, toy_fd):
        def spread(n: int) -> float:
            results = [mc_dropout_predict(params, toy_input, n, seed=s, fd=toy_fd) for s in range(40)]
            means = [r.mean_prob.data[1, 3, 3] for r in results]
            return float(np.std(means))

        se8, se32, se128 = spread(8), spread(32), spread(128)
        assert se32 / se8 == pytest.approx(0.5, rel=0.3)
        assert se128 / se32 == pytest.approx(0.5, rel=0.3)


class TestEnsemble:
    def test_identical_members(self, params, toy_input, toy_fd):
        result = ensemble_predict([params, params.copy(), params.copy()], toy_input, fd=toy_fd)
        single, _ = forward(params, toy_input, fd=toy_fd)
        assert np.array_equal(result.mean_prob.data, single.data)
        assert np.all(result.variance.data == 0.0)

    def test_member_order_irrelevant(self, toy_arch, toy_input, toy_fd):
        members = [init_params(toy_arch, s) for s in (1, 2, 3, 4)]
        a = ensemble_predict(members, toy_input, fd=toy_fd)
        b = ensemble_predict(members[::-1], toy_input, fd=toy_fd)
        assert np.array_equal(a.mean_prob.data, b.mean_prob.data)
        assert np.array_equal(a.variance.data, b.variance.data)

    def test_mixed_architectures(self, toy_arch, toy_input, toy_fd):
        other = init_params(replace(toy_arch, base_filters=8))
        with pytest.raises(StructureError):
            ensemble_predict([init_params(toy_arch), other], toy_input, fd=toy_fd)

    def test_empty(self, toy_input):
        with pytest.raises(ParameterError):
            ensemble_predict([], toy_input)


class TestTransforms:
    @pytest.mark.parametrize("name", sorted(TRANSFORMS))
    def test_inverse_restores_label_map(self, name, rng):
        labels = rng.integers(0, 4, size=(1, 6, 6, 6))
        transform = TRANSFORMS[name]
        assert np.array_equal(transform.invert(transform.apply(labels)), labels)

    def test_default_transforms(self):
        assert default_transforms(2) == ["identity", "flip_x", "flip_y"]

    def test_unknown_transform(self):
        with pytest.raises(ParameterError):
            resolve_transforms(["shear"], (8, 8))

    def test_flip_needs_axis(self):
        with pytest.raises(ParameterError):
            resolve_transforms(["flip_z"], (8, 8))

    def test_rotation_needs_square_plane(self):
        with pytest.raises(ParameterError):
            resolve_transforms(["rot90"], (8, 16))
        assert resolve_transforms(["rot180"], (8, 16))[0].name == "rot180"


class TestTta:
    def test_identity_matches_forward(self, params, toy_input, toy_fd):
        result = tta_predict(params, toy_input, ["identity"], fd=toy_fd)
        plain, _ = forward(params, toy_input, fd=toy_fd)
        assert np.array_equal(result.mean_prob.data, plain.data)
        assert np.all(result.variance.data == 0.0)

    def test_symmetric_input_under_flip(self):
        arch = ArchSpec(input_shape=(8, 8), depth=1, base_filters=4, wavelet_levels=0, fd_channel=False)
        params = init_params(arch, 24)
        for name in params.names:
            tensor = params.tensors[name]
            if tensor.ndim == 4:
                tensor[...] = 0.5 * (tensor + tensor[..., ::-1])
        half = np.random.default_rng(5).standard_normal((1, 8, 4))
        x = Volume(np.concatenate([half, half[:, :, ::-1]], axis=2))
        result = tta_predict(params, x, ["identity", "flip_y"])
        plain, _ = forward(params, x)
        assert np.max(np.abs(result.mean_prob.data - plain.data)) < 1e-6

    def test_mean_sums_to_one(self, params, toy_input, toy_fd):
        result = tta_predict(params, toy_input, ["identity", "flip_x", "rot90", "rot180"], fd=toy_fd)
        assert result.n_samples == 4
        assert np.allclose(result.mean_prob.data.sum(axis=0), 1.0, atol=1e-6)


class TestCombined:
    def test_identity_only_equals_mc_dropout(self, params, toy_input, toy_fd):
        combined = combined_predict(params, toy_input, 5, ["identity"], seed=8, fd=toy_fd)
        mcdo = mc_dropout_predict(params, toy_input, 5, seed=8, fd=toy_fd)
        assert np.array_equal(combined.mean_prob.data, mcdo.mean_prob.data)
        assert np.array_equal(combined.variance.data, mcdo.variance.data)

    def test_methods_agree_without_dropout(self, toy_arch, toy_input, toy_fd):
        params = init_params(replace(toy_arch, dropout_rate=0.0), 23)
        results = [
            mc_dropout_predict(params, toy_input, 1, fd=toy_fd),
            ensemble_predict([params], toy_input, fd=toy_fd),
            tta_predict(params, toy_input, ["identity"], fd=toy_fd),
            combined_predict(params, toy_input, 1, ["identity"], fd=toy_fd),
        ]
        for result in results[1:]:
            assert np.array_equal(result.mean_prob.data, results[0].mean_prob.data)
            assert np.array_equal(result.variance.data, results[0].variance.data)


class TestEntropy:
    def test_uniform_and_certain(self):
        probs = np.zeros((2, 1, 2))
        probs[:, 0, 0] = 0.5
        probs[0, 0, 1] = 1.0
        entropy = predictive_entropy(Volume(probs))
        assert entropy.channel_names == ["entropy"]
        assert entropy.data[0, 0, 0] == pytest.approx(np.log(2.0))
        assert entropy.data[0, 0, 1] == 0.0


def test_uq_method_values():
    assert [m.value for m in UqMethod] == ["mcdo", "ensemble", "tta", "combined"]

