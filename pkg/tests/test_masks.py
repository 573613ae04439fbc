import itertools

import numpy as np
import pandas as pd
import pytest

from cxr_harmon import ArrayDataset, Bitmap, Box, TransformChain, attach_masks, merge_or, rasterize, subset
from cxr_harmon.errors import DegenerateBox, NoMaskSource, ShapeMismatch


class TestRasterize:
    def test_full_cover(self):
        assert rasterize(Box(0, 0, 6, 4), 4, 6).all()

    def test_area(self):
        assert rasterize(Box(0, 0, 2, 2), 4, 4).sum() == 4

    def test_clipped_partially(self):
        g = rasterize(Box(-1, 3, 3, 5), 4, 4)
        assert g.sum() == 2 and g[3, 0] == g[3, 1] == 1

    def test_fully_outside(self):
        with pytest.raises(DegenerateBox):
            rasterize(Box(-5, -5, 2, 2), 4, 4)

    def test_bitmap_passthrough_and_resample(self):
        grid = np.array([[0, 3], [0, 0]])
        assert rasterize(Bitmap(grid), 2, 2).tolist() == [[0, 1], [0, 0]]
        big = rasterize(Bitmap(grid), 4, 4)
        assert big[:2, 2:].all() and big.sum() == 4


class TestMergeOr:
    def test_single(self):
        m = rasterize(Box(1, 1, 2, 2), 4, 4)
        assert np.array_equal(merge_or([m]), m)

    def test_disjoint(self):
        a = rasterize(Box(0, 0, 2, 2), 4, 4)
        b = rasterize(Box(2, 2, 2, 2), 4, 4)
        assert merge_or([a, b]).sum() == 8

    def test_overlap(self):
        a = rasterize(Box(0, 0, 2, 2), 4, 4)
        b = rasterize(Box(1, 1, 2, 2), 4, 4)
        out = merge_or([a, b])
        assert out.sum() == 7 and set(np.unique(out)) == {0, 1}

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            merge_or([np.zeros((2, 2)), np.zeros((3, 3))])

    def test_algebra_on_2x2_exhaustive(self):
        grids = [np.array(bits, dtype=np.uint8).reshape(2, 2) for bits in itertools.product((0, 1), repeat=4)]
        for a in grids:
            assert np.array_equal(merge_or([a, a]), a)
            for b in grids:
                assert np.array_equal(merge_or([a, b]), merge_or([b, a]))


def masked_fixture(with_source=True):
    imgs = [np.full((8, 8), 40 * i, np.uint8) for i in range(5)]
    table = {
        1: {"Effusion": [Box(0, 0, 4, 4), Box(2, 2, 4, 4)]},
        3: {"Mass": [Box(1, 1, 2, 2)], "Hernia": [Box(0, 0, 1, 1)]},
    }
    labels = [[0, 0], [1, 0], [0, 0], [0, 1], [0, 0]]
    return ArrayDataset("Masked", ["Effusion", "Mass"], labels, None, imgs, 8,
                        masks=table if with_source else None)


class TestAttach:
    def test_has_masks_counts(self):
        ds = attach_masks(masked_fixture())
        counts = ds.csv["has_masks"].value_counts().to_dict()
        assert counts == {False: 3, True: 2}

    def test_keys_are_pathology_indices(self):
        ds = attach_masks(masked_fixture())
        s = ds.get_sample(1)
        assert set(s.pathology_masks) == {ds.pathologies.index("Effusion")}
        assert s.pathology_masks[0].sum() == 16 + 16 - 4
        assert ds.get_sample(0).pathology_masks == {}
        assert set(ds.get_sample(3).pathology_masks) == {ds.pathologies.index("Mass")}

    def test_unknown_pathology_dropped_with_warning(self, caplog):
        attach_masks(masked_fixture())
        assert "Hernia" in caplog.text

    def test_disabled(self):
        ds = attach_masks(masked_fixture(), enabled=False)
        assert all(ds.get_sample(i).pathology_masks is None for i in range(len(ds)))

    def test_no_source(self):
        with pytest.raises(NoMaskSource):
            attach_masks(masked_fixture(with_source=False))

    def test_masks_follow_transforms(self):
        ds = attach_masks(masked_fixture())
        s = ds.get_sample(1, TransformChain.parse("crop,resize:5,augment"), seed=3)
        m = s.pathology_masks[0]
        assert m.shape == s.img.shape[-2:]
        assert m.min() >= 0 and m.max() <= 1

    def test_survives_subset(self):
        ds = subset(attach_masks(masked_fixture()), [3, 1])
        assert set(ds.get_sample(0).pathology_masks) == {1}

    def test_file_backed_boxes(self, nih):
        ds = attach_masks(nih)
        assert ds.csv["has_masks"].sum() == 2
        s = ds.get_sample(0)
        card = ds.pathologies.index("Cardiomegaly")
        eff = ds.pathologies.index("Effusion")
        assert s.pathology_masks[card].sum() == 20
        # Effusion box (0, 6, 3, 4) on a 12x10 image covers rows 6..9, cols 0..2
        assert s.pathology_masks[eff].sum() == 12

    def test_file_backed_bitmaps(self, tmp_path):
        from cxr_harmon import load_dataset
        from cxr_harmon.fixtures import write_png

        (tmp_path / "img").mkdir()
        write_png(tmp_path / "img" / "a.png", np.zeros((4, 4), np.uint8))
        write_png(tmp_path / "img" / "b.png", np.zeros((4, 4), np.uint8))
        mask = np.zeros((4, 4), np.uint8)
        mask[1:3, 1:3] = 255
        write_png(tmp_path / "m.png", mask)
        pd.DataFrame({"f": ["a.png", "b.png"], "Lung Opacity": ["1", "0"]}).to_csv(tmp_path / "c.csv", index=False)
        pd.DataFrame({"f": ["a.png"], "pathology": ["Lung Opacity"], "mask": ["m.png"]}).to_csv(
            tmp_path / "masks.csv", index=False)
        from cxr_harmon.ingestion import AdapterProfile

        prof = AdapterProfile.from_dict({
            "name": "Seg", "imgpath": "img", "csvpath": "c.csv", "image_column": "f",
            "labels": {"mode": "per_column", "columns": {"Lung Opacity": "Lung Opacity"}},
            "mask_source": {"kind": "bitmaps", "csvpath": "masks.csv", "maskpath": "."},
        }, base=tmp_path)
        ds = attach_masks(load_dataset(prof))
        assert ds.get_sample(0).pathology_masks[0].sum() == 4
        assert ds.get_sample(1).pathology_masks == {}
