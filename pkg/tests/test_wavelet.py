"""Tests for the DWT and scattering transforms."""

import math

import numpy as np
import pytest

from fractex.errors import ParameterError, StructureError
from fractex.models.volume import Volume
from fractex.models.wavelet import Boundary, ScatterStack, WaveletFamily, WaveletSpec
from fractex.services.wavelet import (
    dwt_forward,
    dwt_inverse,
    level_shapes,
    orientation_keys,
    scatter,
    scattering_moment,
)

HAAR = WaveletSpec(WaveletFamily.HAAR, Boundary.PERIODIC)
FAMILIES = [WaveletFamily.HAAR, WaveletFamily.DB2, WaveletFamily.DB4]


def energy(sb) -> float:
    total = float(np.sum(sb.approx.data**2))
    for level in sb.details:
        total += sum(float(np.sum(band.data**2)) for band in level.values())
    return total


class TestDwt:
    def test_haar_pairs(self):
        sb = dwt_forward(Volume(np.array([[1, 1, 1, 1, 2, 2, 2, 2]], dtype=float)), HAAR, 1)
        r2 = math.sqrt(2.0)
        assert sb.approx.data[0] == pytest.approx([r2, r2, 2 * r2, 2 * r2])
        assert np.all(sb.details[0]["d"].data == 0.0)

    def test_orientation_keys(self):
        assert orientation_keys(1) == ["d"]
        assert orientation_keys(2) == ["ad", "da", "dd"]
        assert len(orientation_keys(3)) == 7

    @pytest.mark.parametrize("family", FAMILIES)
    def test_constant_has_no_detail(self, family):
        sb = dwt_forward(Volume(np.full((1, 32, 32), 3.5)), WaveletSpec(family), 2)
        for level in sb.details:
            for band in level.values():
                assert np.max(np.abs(band.data)) < 1e-12

    @pytest.mark.parametrize("family", FAMILIES)
    def test_energy_preserved(self, family, rng):
        x = Volume(rng.standard_normal((1, 64, 64)))
        sb = dwt_forward(x, WaveletSpec(family), 3)
        assert energy(sb) == pytest.approx(float(np.sum(x.data**2)), rel=1e-9)
        assert sb.coefficient_count == x.data.size

    @pytest.mark.parametrize("family", FAMILIES)
    @pytest.mark.parametrize("levels", [1, 2, 3, 4])
    def test_perfect_reconstruction(self, family, levels, rng):
        x = Volume(rng.standard_normal((1, 128)))
        back = dwt_inverse(dwt_forward(x, WaveletSpec(family), levels))
        assert np.linalg.norm(back.data - x.data) <= 1e-9 * np.linalg.norm(x.data)

    def test_reconstruction_3d_multichannel(self, rng):
        x = Volume(rng.standard_normal((2, 16, 16, 16)), spacing=(1.0, 1.0, 2.0))
        sb = dwt_forward(x, WaveletSpec(WaveletFamily.DB2), 2)
        assert sb.approx.spacing == (4.0, 4.0, 8.0)
        back = dwt_inverse(sb)
        assert back.spacing == x.spacing
        assert np.allclose(back.data, x.data, atol=1e-10)

    def test_zero_subbands(self):
        sb = dwt_forward(Volume(np.ones((1, 16, 16))), HAAR, 2)
        sb.approx.data[...] = 0.0
        back = dwt_inverse(sb)
        assert np.all(back.data == 0.0)

    def test_constant_survives_detail_removal(self):
        x = Volume(np.full((1, 32, 32), 1.25))
        sb = dwt_forward(x, HAAR, 3)
        for level in sb.details:
            for band in level.values():
                band.data[...] = 0.0
        np.testing.assert_allclose(dwt_inverse(sb).data, x.data, rtol=0.0, atol=1e-12)

    def test_shift_covariance(self, rng):
        x = rng.standard_normal((1, 64))
        shifted = np.roll(x, 4, axis=1)
        a = dwt_forward(Volume(x), WaveletSpec(WaveletFamily.DB2), 2).approx.data
        b = dwt_forward(Volume(shifted), WaveletSpec(WaveletFamily.DB2), 2).approx.data
        assert np.allclose(np.roll(a, 1, axis=1), b, atol=1e-12)

    def test_too_many_levels(self):
        with pytest.raises(ParameterError):
            dwt_forward(Volume(np.ones((1, 8))), HAAR, 4)

    def test_inconsistent_subbands(self):
        sb = dwt_forward(Volume(np.ones((1, 16, 16))), HAAR, 2)
        sb.details[0]["dd"] = Volume(np.zeros((1, 4, 4)))
        with pytest.raises(StructureError):
            dwt_inverse(sb)

    def test_level_shapes(self):
        assert level_shapes((64, 32), HAAR, 3) == [(32, 16), (16, 8), (8, 4)]


class TestScatter:
    def test_zero_input(self):
        stack = scatter(Volume(np.zeros((1, 64))), WaveletSpec(WaveletFamily.DB2), 3)
        assert all(np.all(c.data == 0.0) for c in stack.coeffs)

    @pytest.mark.parametrize("boundary", [Boundary.PERIODIC, Boundary.SYMMETRIC])
    def test_positive_homogeneity(self, boundary, rng):
        x = Volume(rng.standard_normal((1, 32, 32)))
        spec = WaveletSpec(WaveletFamily.DB2, boundary)
        a = scatter(x, spec, 3)
        b = scatter(x.with_data(3.0 * x.data), spec, 3)
        for j in (1, 2, 3):
            assert np.allclose(b.at(j), 3.0 * a.at(j), rtol=1e-12, atol=0.0)

    def test_output_shape(self, rng):
        x = Volume(rng.standard_normal((1, 16, 32)))
        stack = scatter(x, WaveletSpec(WaveletFamily.HAAR, Boundary.SYMMETRIC), 3)
        assert stack.scales == 3
        assert all(c.data.shape == (1, 16, 32) for c in stack.coeffs)

    def test_j_limits(self):
        with pytest.raises(ParameterError):
            scatter(Volume(np.ones((1, 64))), HAAR, 1)
        with pytest.raises(ParameterError):
            scatter(Volume(np.ones((1, 16))), HAAR, 5)

    def test_white_noise_decay(self):
        slopes = []
        for seed in range(20):
            noise = np.random.default_rng(seed).standard_normal((1, 4096))
            stack = scatter(Volume(noise), WaveletSpec(WaveletFamily.DB2), 4)
            means = [np.log2(stack.at(j).mean()) for j in range(1, 5)]
            slopes.append(np.polyfit(np.arange(1, 5), means, 1)[0])
        assert np.mean(slopes) == pytest.approx(-0.5, abs=0.1)


class TestScatteringMoment:
    def stack(self, grid: np.ndarray) -> ScatterStack:
        return ScatterStack([Volume(grid[np.newaxis])], scales=1, spec=HAAR)

    def test_zero_stack(self):
        assert scattering_moment(self.stack(np.zeros((4, 4))), 1, 2.5) == 0.0

    def test_ones(self):
        assert scattering_moment(self.stack(np.ones((4, 4))), 1, 1.0) == 1.0

    def test_matches_direct_sum(self, rng):
        grid = np.abs(rng.standard_normal((32, 32)))
        total = 0.0
        for i in range(32):
            for k in range(32):
                total += grid[i, k] ** 2
        assert scattering_moment(self.stack(grid), 1, 2.0) == pytest.approx(total / 1024, abs=1e-12)

    def test_scale_out_of_range(self):
        with pytest.raises(ParameterError):
            scattering_moment(self.stack(np.ones((4, 4))), 2, 1.0)
