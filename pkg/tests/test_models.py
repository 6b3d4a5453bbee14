"""Tests for data models."""

import numpy as np
import pytest

from fractex.errors import ParameterError, StructureError
from fractex.models.dataset import EllipseGeometry
from fractex.models.hurst import FbmSpec, HurstEstimate, Pooling, PoolSpec
from fractex.models.network import ArchSpec, NetworkParams, TrainConfig
from fractex.models.report import CaseReport, RegionScores, UqMethod, UqResult
from fractex.models.volume import Volume
from fractex.models.wavelet import Boundary, WaveletFamily, WaveletSpec
from fractex.services.fractal import fractal_dimension


class TestVolume:
    def test_defaults(self):
        v = Volume(np.zeros((2, 4, 6)))
        assert v.channels == 2
        assert v.ndim == 2
        assert v.shape == (4, 6)
        assert v.spacing == (1.0, 1.0)
        assert v.channel_names == ["c0", "c1"]

    def test_from_grid(self):
        v = Volume.from_grid(np.arange(8.0), channel_names=["series"])
        assert v.data.shape == (1, 8)
        assert v.grid.shape == (8,)

    def test_requires_channel_axis(self):
        with pytest.raises(StructureError):
            Volume(np.zeros(5))

    def test_spacing_must_match_axes(self):
        with pytest.raises(StructureError):
            Volume(np.zeros((1, 4, 4)), spacing=(1.0,))

    def test_grid_needs_single_channel(self):
        with pytest.raises(StructureError):
            _ = Volume(np.zeros((2, 4))).grid

    def test_with_data_resets_names_on_channel_change(self):
        v = Volume(np.zeros((1, 4)), spacing=(0.5,), channel_names=["image"], attrs={"k": 1})
        same = v.with_data(np.ones((1, 4)))
        assert same.channel_names == ["image"]
        assert same.spacing == (0.5,)
        assert same.attrs == {"k": 1}
        wider = v.with_data(np.ones((3, 4)))
        assert wider.channel_names == ["c0", "c1", "c2"]


class TestFbmSpec:
    def test_valid(self):
        spec = FbmSpec(0.5, [64, 64], seed=3)
        assert spec.dims == (64, 64)

    @pytest.mark.parametrize("hurst", [0.0, 1.0, -0.2, 1.5])
    def test_hurst_open_interval(self, hurst):
        with pytest.raises(ParameterError):
            FbmSpec(hurst, (64,))

    def test_dims_too_small(self):
        with pytest.raises(ParameterError):
            FbmSpec(0.5, (4, 64))

    def test_too_many_axes(self):
        with pytest.raises(ParameterError):
            FbmSpec(0.5, (8, 8, 8, 8))


class TestFractalDimension:
    def test_examples(self):
        assert fractal_dimension(0.5, 1) == pytest.approx(1.5)
        assert fractal_dimension(0.3, 2) == pytest.approx(2.7)
        assert fractal_dimension(0.8, 3) == pytest.approx(3.2)

    def test_identity_holds_exactly(self):
        rng = np.random.default_rng(0)
        for h in rng.uniform(1e-6, 1 - 1e-6, size=10_000):
            for n in (1, 2, 3):
                estimate = HurstEstimate(float(h), n, [], 0.0, (1, 3), 1.0)
                assert estimate.fd == fractal_dimension(float(h), n) == n + 1 - float(h)

    def test_invalid_dimension(self):
        with pytest.raises(ParameterError):
            fractal_dimension(0.5, 4)


class TestPoolSpec:
    def test_identity_pooling_needs_factor_one(self):
        with pytest.raises(ParameterError):
            PoolSpec(pooling=Pooling.IDENTITY, pool_factor=2)

    def test_lipschitz_constants(self):
        spec = PoolSpec(pool_factor=4)
        assert spec.lipschitz_nonlinearity == 1.0
        assert spec.lipschitz_pooling == 1.0


class TestArchSpec:
    def test_channel_counts(self):
        arch = ArchSpec(input_shape=(64, 64), in_channels=2, wavelet_levels=1, fd_channel=True)
        assert arch.bands_per_channel == 4
        assert arch.encoder_in_channels == 9
        assert arch.head_channels == 8
        assert arch.working_shape == (32, 32)

    def test_plain_unet(self):
        arch = ArchSpec(input_shape=(32, 32), wavelet_levels=0, fd_channel=False)
        assert arch.encoder_in_channels == 1
        assert arch.working_shape == (32, 32)

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"num_classes": 1},
            {"depth": 0},
            {"base_filters": 2},
            {"kernel_size": 4},
            {"dropout_rate": 1.0},
            {"wavelet_levels": -1},
            {"input_shape": (8, 8, 8, 8)},
        ],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ParameterError):
            ArchSpec(**kwargs)

    def test_dict_round_trip(self):
        arch = ArchSpec(
            input_shape=(16, 32),
            num_classes=4,
            wavelet=WaveletSpec(WaveletFamily.DB2, Boundary.PERIODIC),
            dropout_rate=0.3,
        )
        assert ArchSpec.from_dict(arch.to_dict()) == arch


class TestTrainConfig:
    def test_defaults(self):
        config = TrainConfig()
        assert config.learning_rate == 1e-3
        assert config.loss_weights == (1.0, 0.1)

    @pytest.mark.parametrize("kwargs", [{"learning_rate": 0.0}, {"batch_size": 0}, {"epochs": 0}])
    def test_invalid(self, kwargs):
        with pytest.raises(ParameterError):
            TrainConfig(**kwargs)


class TestNetworkParams:
    def test_copy_is_deep(self):
        params = NetworkParams({"a.w": np.ones((2, 2))}, ArchSpec())
        clone = params.copy()
        clone.tensors["a.w"][0, 0] = 5.0
        assert params["a.w"][0, 0] == 1.0
        assert params.num_parameters == 4


class TestEllipseGeometry:
    def test_fraction_order(self):
        with pytest.raises(ParameterError):
            EllipseGeometry(min_fraction=0.4, max_fraction=0.1)

    def test_border_positive(self):
        with pytest.raises(ParameterError):
            EllipseGeometry(border=0.0)


class TestReports:
    def test_metric_values(self):
        case = CaseReport(
            case_id="a",
            regions={"WT": RegionScores(dice=0.5, hd95=2.0), "TC": RegionScores(dice=1.0, hd95=0.0)},
            nmse=0.1,
        )
        assert case.metric_values() == {
            "Dice_WT": 0.5,
            "HD95_WT": 2.0,
            "Dice_TC": 1.0,
            "HD95_TC": 0.0,
            "NMSE": 0.1,
        }

    def test_dice_range_validated(self):
        with pytest.raises(ValueError):
            RegionScores(dice=1.5, hd95=0.0)

    def test_uq_summary(self):
        mean = Volume(np.full((2, 4, 4), 0.5))
        result = UqResult(mean, Volume(np.zeros((2, 4, 4))), n_samples=3, method=UqMethod.TTA)
        summary = result.summary()
        assert summary["method"] == "tta"
        assert summary["mean_variance"] == 0.0
        assert summary["mean_entropy"] == pytest.approx(np.log(2.0))
