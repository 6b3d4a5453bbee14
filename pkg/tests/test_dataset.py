"""Tests for the synthetic two-texture dataset."""

import numpy as np
import pytest

from fractex.errors import DataError, ParameterError
from fractex.models.dataset import EllipseGeometry
from fractex.models.hurst import FbmSpec
from fractex.services.dataset import (
    blend_weights,
    generate_cases,
    load_dataset,
    load_manifest,
    make_synthetic_dataset,
    sample_ellipse,
)
from fractex.services.segnet import fd_channel

BACKGROUND = FbmSpec(0.8, (32, 32))
FOREGROUND = FbmSpec(0.3, (32, 32))


class TestEllipse:
    @pytest.mark.parametrize("shape", [(32, 32), (16, 16, 16)])
    def test_fraction_in_range(self, shape, rng):
        geometry = EllipseGeometry()
        for _ in range(10):
            mask = sample_ellipse(shape, geometry, rng)
            assert mask.shape == shape
            assert geometry.min_fraction <= mask.mean() <= geometry.max_fraction

    def test_impossible_geometry(self, rng):
        geometry = EllipseGeometry(min_fraction=0.3, max_fraction=0.35, border=10.0, max_attempts=5)
        with pytest.raises(ParameterError):
            sample_ellipse((16, 16), geometry, rng)

    def test_invalid_geometry(self):
        with pytest.raises(ParameterError):
            EllipseGeometry(min_fraction=0.5, max_fraction=0.2)

    def test_blend_weights(self):
        mask = np.zeros((16, 16), dtype=bool)
        mask[4:12, 4:12] = True
        alpha = blend_weights(mask, 2.0)
        assert alpha[8, 8] == 1.0
        assert alpha[0, 0] == 0.0
        assert 0.0 < alpha[4, 8] < 1.0
        assert np.all((alpha >= 0.0) & (alpha <= 1.0))


class TestGenerateCases:
    def test_deterministic(self):
        a = list(generate_cases(BACKGROUND, FOREGROUND, 3, seed=11))
        b = list(generate_cases(BACKGROUND, FOREGROUND, 3, seed=11))
        for (id_a, image_a, mask_a), (id_b, image_b, mask_b) in zip(a, b, strict=True):
            assert id_a == id_b
            assert image_a.data.tobytes() == image_b.data.tobytes()
            assert mask_a.data.tobytes() == mask_b.data.tobytes()

    def test_cases_differ_and_are_typed(self):
        cases = list(generate_cases(BACKGROUND, FOREGROUND, 2, seed=0))
        assert [c[0] for c in cases] == ["case_000", "case_001"]
        assert not np.array_equal(cases[0][1].data, cases[1][1].data)
        assert cases[0][1].data.dtype == np.float32
        assert cases[0][2].data.dtype == np.uint8
        assert set(np.unique(cases[0][2].data).tolist()) == {0, 1}

    def test_equal_hurst_rejected(self):
        with pytest.raises(ParameterError):
            next(generate_cases(BACKGROUND, FbmSpec(0.8, (32, 32)), 1))

    def test_needs_a_case(self):
        with pytest.raises(ParameterError):
            next(generate_cases(BACKGROUND, FOREGROUND, 0))

    def test_foreground_is_rougher(self):
        background, foreground = FbmSpec(0.8, (64, 64)), FbmSpec(0.2, (64, 64))
        for _, image, mask in generate_cases(background, foreground, 3, seed=5):
            fd = fd_channel(image).grid
            inside = mask.grid.astype(bool)
            assert fd[inside].mean() > fd[~inside].mean()


class TestDatasetFiles:
    def test_write_and_load(self, tmp_path):
        manifest = make_synthetic_dataset(BACKGROUND, FOREGROUND, 2, tmp_path / "data", seed=3)
        assert [c.case_id for c in manifest.cases] == ["case_000", "case_001"]
        assert (tmp_path / "data" / "case_001" / "mask.raw").exists()
        assert load_manifest(tmp_path / "data") == manifest

        loaded, cases = load_dataset(tmp_path / "data")
        expected = list(generate_cases(BACKGROUND, FOREGROUND, 2, seed=3))
        for (_, image, mask), (_, want_image, want_mask) in zip(cases, expected, strict=True):
            assert np.array_equal(image.data, want_image.data)
            assert np.array_equal(mask.data, want_mask.data)
        for entry, (_, _, mask) in zip(loaded.cases, cases, strict=True):
            assert entry.foreground_fraction == pytest.approx(mask.data.mean())

    def test_same_seed_same_bytes(self, tmp_path):
        make_synthetic_dataset(BACKGROUND, FOREGROUND, 2, tmp_path / "a", seed=9)
        make_synthetic_dataset(BACKGROUND, FOREGROUND, 2, tmp_path / "b", seed=9)
        for name in ("manifest.json", "case_000/image.raw", "case_001/mask.raw"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(DataError):
            load_manifest(tmp_path)
