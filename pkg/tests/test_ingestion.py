import json
import math
from fractions import Fraction

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, strategies as st

from cxr_harmon import AdapterProfile, RawImage, decode_image, load_dataset, scale_pixels
from cxr_harmon.errors import BitDepthMismatch, CsvParseError, DecodeError, EmptyDataset, ProfileError
from cxr_harmon.fixtures import make_nih_fixture, write_png


def _raw(values, depth):
    dtype = np.uint16 if depth == 16 else np.uint8
    return RawImage(np.asarray(values, dtype=dtype).reshape(1, -1), depth)


class TestScalePixels:
    def test_endpoints(self):
        assert scale_pixels(_raw([0, 255], 8))[0, 0].tolist() == [-1024.0, 1024.0]
        assert scale_pixels(_raw([0, 65535], 16))[0, 0].tolist() == [-1024.0, 1024.0]

    def test_16_bit_quarter_value(self):
        expected = float(Fraction(16384, 65535) * 2048 - 1024)
        assert expected == pytest.approx(-511.9922, abs=1e-4)
        assert scale_pixels(_raw([16384], 16))[0, 0, 0] == pytest.approx(expected, abs=1e-12)

    def test_adds_channel_axis(self):
        img = RawImage(np.zeros((3, 5), np.uint8), 8)
        assert scale_pixels(img).shape == (1, 3, 5)

    @given(st.integers(0, 65535), st.integers(0, 65535))
    def test_affine_difference(self, a, b):
        out = scale_pixels(_raw([a, b], 16))[0, 0]
        assert out[0] - out[1] == pytest.approx((a - b) * 2048 / 65535, abs=1e-9)
        assert -1024 <= out.min() and out.max() <= 1024

    def test_no_contrast_stretch(self):
        # same pixels, different surroundings: a low-contrast image is not stretched
        narrow = RawImage(np.array([[100, 101]], np.uint8), 8)
        wide = RawImage(np.array([[100, 101, 0, 255]], np.uint8), 8)
        assert np.array_equal(scale_pixels(narrow)[0, 0], scale_pixels(wide)[0, 0, :2])


class TestDecode:
    def test_8_bit_zeros(self, tmp_path):
        write_png(tmp_path / "z.png", np.zeros((4, 4), np.uint8))
        raw = decode_image(tmp_path / "z.png", 8)
        assert raw.bit_depth == 8 and raw.pixels.shape == (4, 4) and not raw.pixels.any()

    def test_16_bit_max_preserved(self, tmp_path):
        px = np.array([[0, 65535], [16384, 3]], np.uint16)
        write_png(tmp_path / "m.png", px)
        raw = decode_image(tmp_path / "m.png", 16)
        assert raw.pixels.max() == 65535
        assert np.array_equal(raw.pixels, px)

    def test_rgb_rejected(self, tmp_path):
        write_png(tmp_path / "rgb.png", np.zeros((4, 4, 3), np.uint8))
        with pytest.raises(DecodeError):
            decode_image(tmp_path / "rgb.png", 8)

    def test_bit_depth_mismatch(self, tmp_path):
        write_png(tmp_path / "z.png", np.zeros((4, 4), np.uint8))
        with pytest.raises(BitDepthMismatch):
            decode_image(tmp_path / "z.png", 16)

    def test_not_an_image(self, tmp_path):
        (tmp_path / "x.png").write_bytes(b"not a png")
        with pytest.raises(DecodeError):
            decode_image(tmp_path / "x.png", 8)


class TestLoadDataset:
    def test_nih_delimited(self, nih):
        assert len(nih) == 12
        row = nih.labels[0]
        assert row[nih.pathologies.index("Cardiomegaly")] == 1
        assert row[nih.pathologies.index("Effusion")] == 1
        assert np.nansum(row) == 2
        # "No Finding" row is all absent
        assert (nih.labels[1] == 0).all()
        assert "Pleural Thickening" in nih.pathologies
        assert nih.labels[5, nih.pathologies.index("Pleural Thickening")] == 1

    def test_standard_columns(self, nih):
        assert {"patientid", "view", "offset_day_int", "has_masks"} <= set(nih.csv.columns)
        assert "Finding Labels" in nih.csv.columns  # raw columns preserved
        assert nih.csv["patientid"].tolist()[:3] == ["1000", "1000", "1001"]
        assert nih.csv["offset_day_int"].tolist()[:4] == [0, 1, 2, 0]
        assert not nih.csv["has_masks"].any()

    def test_chexpert_unknown_and_blank(self, chex):
        # row 0, Edema column (j=3): codes[(0 + 3) % 4] == "" -> unknown
        # row 2, Atelectasis (j=0): codes[2] == "-1.0" -> unknown
        assert math.isnan(chex.labels[2, chex.pathologies.index("Atelectasis")])
        assert math.isnan(chex.labels[0, chex.pathologies.index("Edema")])
        assert chex.labels[0, chex.pathologies.index("Atelectasis")] == 1
        assert chex.labels[1, chex.pathologies.index("Atelectasis")] == 0
        assert "Effusion" in chex.pathologies  # renamed from "Pleural Effusion"

    def test_view_map(self, pc):
        assert pc.csv["view"].tolist()[:4] == ["PA", "AP", "AP Supine", "Lateral"]

    def test_missing_column(self, corpus, tmp_path):
        data = json.loads(corpus["nih"].read_text())
        data["view_column"] = "viewz"
        path = corpus["nih"].parent / "bad_profile.json"
        path.write_text(json.dumps(data))
        with pytest.raises(ProfileError, match="viewz"):
            load_dataset(path)

    def test_missing_images_dropped_and_counted(self, tmp_path, caplog):
        ds = load_dataset(make_nih_fixture(tmp_path, drop_files=3))
        assert len(ds) == 9 and ds.dropped == 3
        assert len(ds) + ds.dropped == len(pd.read_csv(ds.profile.csvpath))
        assert "dropping 3" in caplog.text

    def test_all_missing_is_empty(self, tmp_path):
        with pytest.raises(EmptyDataset):
            load_dataset(make_nih_fixture(tmp_path, drop_files=12))

    def test_malformed_csv(self, corpus, tmp_path):
        prof = AdapterProfile.load(corpus["nih"])
        bad = tmp_path / "bad.csv"
        bad.write_bytes(b'"unterminated\n')
        prof = AdapterProfile(**{**prof.__dict__, "csvpath": bad})
        with pytest.raises(CsvParseError):
            load_dataset(prof)

    def test_missing_csv(self, corpus, tmp_path):
        prof = AdapterProfile.load(corpus["nih"])
        prof = AdapterProfile(**{**prof.__dict__, "csvpath": tmp_path / "nope.csv"})
        with pytest.raises(FileNotFoundError, match="nope.csv"):
            load_dataset(prof)


class TestProfile:
    base = {"name": "X", "imgpath": "i", "csvpath": "c.csv", "image_column": "f"}

    def test_overlapping_value_sets(self):
        with pytest.raises(ProfileError):
            AdapterProfile.from_dict({**self.base, "labels": {
                "mode": "per_column", "positive": ["1"], "negative": ["1"], "columns": {"A": "A"}}})

    def test_bad_bit_depth(self):
        with pytest.raises(ProfileError):
            AdapterProfile.from_dict({**self.base, "bit_depth": 12,
                                      "labels": {"mode": "per_column", "columns": {"A": "A"}}})

    def test_unknown_mode(self):
        with pytest.raises(ProfileError):
            AdapterProfile.from_dict({**self.base, "labels": {"mode": "both"}})

    def test_label_mode_names(self):
        p = AdapterProfile.from_dict({**self.base, "labels": {"mode": "per_column", "columns": {"A": "A"}}})
        assert p.label_mode == "PerColumn"
