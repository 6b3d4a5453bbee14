"""Tests for VolumeFile, checkpoint and report storage."""

import json

import numpy as np
import pytest

from fractex.errors import DataError
from fractex.models.report import CaseReport, EvalReport, RegionScores
from fractex.models.volume import Volume
from fractex.services.segnet import init_params
from fractex.storage.checkpoint import MAGIC, checkpoint_bytes, load_checkpoint, save_checkpoint
from fractex.storage.reports import load_report, render_table, report_json, save_report
from fractex.storage.volume_file import load_volume, save_volume, volume_paths


class TestVolumeFile:
    def test_float_round_trip_is_exact(self, tmp_path, rng):
        data = rng.standard_normal((1, 32, 32, 4)).astype(np.float32)
        volume = Volume(data, spacing=(1.0, 1.0, 2.5), channel_names=["flair"], attrs={"hurst": 0.7})
        header = save_volume(volume, tmp_path / "image")
        assert header == tmp_path / "image.json"

        loaded = load_volume(tmp_path / "image")
        assert loaded.data.dtype == np.float32
        assert loaded.data.tobytes() == data.tobytes()
        assert loaded.spacing == (1.0, 1.0, 2.5)
        assert loaded.channel_names == ["flair"]
        assert loaded.attrs == {"hurst": 0.7}

    def test_header_fields(self, tmp_path):
        save_volume(Volume(np.zeros((2, 3, 5))), tmp_path / "v")
        header = json.loads((tmp_path / "v.json").read_text())
        assert header["dims"] == [3, 5]
        assert header["channels"] == 2
        assert header["axis_order"] == "xy"
        assert header["dtype"] == "float32"
        assert header["format_version"] == 1
        assert (tmp_path / "v.raw").stat().st_size == 2 * 3 * 5 * 4

    def test_labels_stored_as_uint8(self, tmp_path):
        labels = np.array([[[0, 1], [2, 4]]], dtype=np.int64)
        save_volume(Volume(labels), tmp_path / "mask")
        loaded = load_volume(tmp_path / "mask.json")
        assert loaded.data.dtype == np.uint8
        assert loaded.data.tolist() == labels.tolist()

    def test_labels_out_of_range(self, tmp_path):
        with pytest.raises(DataError):
            save_volume(Volume(np.array([[300]])), tmp_path / "mask")

    def test_truncated_payload(self, tmp_path):
        save_volume(Volume(np.ones((1, 4, 4))), tmp_path / "v")
        raw = tmp_path / "v.raw"
        raw.write_bytes(raw.read_bytes()[:-4])
        with pytest.raises(DataError) as excinfo:
            load_volume(tmp_path / "v")
        assert excinfo.value.field == "payload"

    def test_missing_header(self, tmp_path):
        with pytest.raises(DataError) as excinfo:
            load_volume(tmp_path / "absent")
        assert excinfo.value.field == "header"

    @pytest.mark.parametrize(
        ("field", "value"),
        [("format_version", 2), ("dtype", "float16"), ("dims", [0, 4]), ("axis_order", "yx")],
    )
    def test_bad_header_field(self, tmp_path, field, value):
        save_volume(Volume(np.ones((1, 4, 4))), tmp_path / "v")
        header_path = tmp_path / "v.json"
        header = json.loads(header_path.read_text())
        header[field] = value
        header_path.write_text(json.dumps(header))
        with pytest.raises(DataError) as excinfo:
            load_volume(header_path)
        assert excinfo.value.field == field

    def test_paths(self, tmp_path):
        assert volume_paths(tmp_path / "a.raw") == (tmp_path / "a.json", tmp_path / "a.raw")


class TestCheckpoint:
    def test_round_trip(self, tmp_path, toy_arch):
        params = init_params(toy_arch, 5)
        save_checkpoint(params, tmp_path / "model.ckpt")
        loaded = load_checkpoint(tmp_path / "model.ckpt")
        assert loaded.arch == toy_arch
        assert loaded.init_seed == 5
        assert loaded.names == params.names
        for name in params.names:
            assert np.array_equal(loaded[name], params[name].astype(np.float32).astype(np.float64))

    def test_bytes_are_stable(self, toy_arch):
        a = checkpoint_bytes(init_params(toy_arch, 5))
        b = checkpoint_bytes(init_params(toy_arch, 5))
        assert a == b
        assert a.startswith(MAGIC)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "model.ckpt"
        path.write_bytes(b"not a checkpoint")
        with pytest.raises(DataError) as excinfo:
            load_checkpoint(path)
        assert excinfo.value.field == "magic"

    def test_truncated_payload(self, tmp_path, toy_arch):
        path = tmp_path / "model.ckpt"
        path.write_bytes(checkpoint_bytes(init_params(toy_arch))[:-2])
        with pytest.raises(DataError) as excinfo:
            load_checkpoint(path)
        assert excinfo.value.field == "payload"

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            load_checkpoint(tmp_path / "absent.ckpt")


def _report() -> EvalReport:
    case = CaseReport(
        case_id="case_000",
        regions={"WT": RegionScores(dice=0.9, hd95=1.5), "ET": RegionScores(dice=1.0, hd95=0.0)},
        nmse=0.25,
    )
    return EvalReport(cases=[case], summary={"mean": {"Dice_WT": 0.9, "HD95_WT": 1.5}})


class TestReports:
    def test_save_and_load(self, tmp_path):
        report = _report()
        save_report(report, tmp_path / "eval.json")
        assert load_report(tmp_path / "eval.json") == report
        assert (tmp_path / "eval.json").read_text() == report_json(report)

    def test_invalid_report(self, tmp_path):
        path = tmp_path / "eval.json"
        path.write_text(json.dumps({"cases": [{"regions": {"WT": {"dice": 2.0, "hd95": 0.0}}}]}))
        with pytest.raises(DataError) as excinfo:
            load_report(path)
        assert excinfo.value.field.startswith("cases.0.regions.WT.dice")

    def test_render_table(self):
        lines = render_table(_report(), precision=2).splitlines()
        assert lines[0].split() == ["Dice_WT", "HD95_WT", "Dice_ET", "HD95_ET", "NMSE"]
        assert lines[2].split() == ["case_000", "0.90", "1.50", "1.00", "0.00", "0.25"]
        assert lines[3].split() == ["mean", "0.90", "1.50", "-", "-", "-"]
