import ast
import math

import numpy as np
import pandas as pd
import pytest

from cxr_harmon import ArrayDataset, TransformChain, render_summary, totals
from cxr_harmon.errors import IndexOutOfRange, ShapeMismatch
from cxr_harmon.taxonomy import TriState


def _parse_totals(text):
    body = text.split("\n", 1)[1]
    start = body.index("{")
    return ast.literal_eval(body[start:])


def small(labels, names=("Atelectasis",), views=None):
    labels = np.asarray(labels, dtype=float).reshape(len(labels), -1)
    csv = pd.DataFrame({"view": views}) if views is not None else None
    imgs = [np.full((4, 6), 10 * i, np.uint8) for i in range(len(labels))]
    return ArrayDataset("Tiny_Dataset", names, labels, csv, imgs, 8)


class TestTotals:
    def test_counts_exclude_unknown(self):
        ds = small([1, 0, np.nan, 1])
        assert totals(ds) == {"Atelectasis": {0.0: 1, 1.0: 2}}

    def test_all_unknown(self):
        ds = small([np.nan, np.nan])
        assert totals(ds) == {"Atelectasis": {0.0: 0, 1.0: 0}}

    def test_rendering_uses_float_keys(self, chex):
        text = render_summary(chex)
        assert "{'Atelectasis': {0.0:" in text
        assert _parse_totals(text) == totals(chex)

    def test_permutation_invariant(self, pc):
        from cxr_harmon import subset

        perm = np.random.default_rng(0).permutation(len(pc))
        assert totals(subset(pc, perm)) == totals(pc)


class TestSummary:
    def test_header(self, nih):
        assert render_summary(nih).splitlines()[0] == "NIH_Dataset num_samples=12 views=['AP', 'PA']"

    def test_no_views_clause_without_view_column(self):
        ds = small([1, 0])
        assert render_summary(ds).splitlines()[0] == "Tiny_Dataset num_samples=2"


class TestGetSample:
    def test_shape_after_crop_resize(self, nih):
        s = nih.get_sample(0, TransformChain.parse("crop,resize:224"))
        assert s.img.shape == (1, 224, 224)
        assert s.img.min() >= -1024 and s.img.max() <= 1024

    def test_bounds(self, nih):
        with pytest.raises(IndexOutOfRange):
            nih.get_sample(len(nih))
        with pytest.raises(IndexOutOfRange):
            nih.get_sample(-1)

    def test_label_alignment(self, nih, chex, pc):
        for ds in (nih, chex, pc):
            for i in range(len(ds)):
                lab = ds.get_sample(i).lab
                np.testing.assert_array_equal(lab, ds.labels[i])

    def test_metadata_row(self, nih):
        s = nih.get_sample(3)
        assert s.metadata["Image Index"] == "00000003_000.png"
        assert s.pathology_masks is None

    def test_untransformed_image_is_scaled_raw(self, pc):
        s = pc.get_sample(2)
        raw = pc.raw_image(2)
        np.testing.assert_allclose(s.img[0], raw.pixels / 65535 * 2048 - 1024, atol=1e-9)

    def test_repeatable(self, nih):
        chain = TransformChain.parse("crop,resize:16,augment")
        a = nih.get_sample(5, chain, seed=11).img
        b = nih.get_sample(5, chain, seed=11).img
        assert np.array_equal(a, b)


class TestConstruction:
    def test_state_accessor(self):
        ds = small([1, 0, np.nan])
        assert [ds.state(i, "atelectasis") for i in range(3)] == [
            TriState.PRESENT, TriState.ABSENT, TriState.UNKNOWN]

    def test_bad_label_values(self):
        with pytest.raises(ValueError):
            small([0.5])

    def test_row_mismatch(self):
        with pytest.raises(ShapeMismatch):
            ArrayDataset("X", ["A"], [[1], [0]], pd.DataFrame({"a": [1]}), [np.zeros((2, 2), np.uint8)] * 2)

    def test_labels_read_only(self, nih):
        with pytest.raises(ValueError):
            nih.labels[0, 0] = 1
        assert math.isfinite(nih.labels[0, 0])
