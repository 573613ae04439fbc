import hashlib

import numpy as np
import pandas as pd
import pytest

from cxr_harmon import ArrayDataset, CovariateSpec, build_covariate, class_mean_difference, partition_pools
from cxr_harmon.covariate import round_half_away
from cxr_harmon.errors import EmptyClass, InfeasiblePool
from cxr_harmon.fixtures import patch_arrays

RATIOS = (0.1, 0.25, 0.5, 0.75, 0.9)


def bucket_oracle(key, seed):
    return int(hashlib.sha256(f"{seed}:{key}".encode()).hexdigest()[:16], 16) % 100


def one_per_patient(n):
    csv = pd.DataFrame({"patientid": [f"p{i}" for i in range(n)]})
    imgs = [np.zeros((2, 2), np.uint8)] * n
    return ArrayDataset("P", ["Mass"], [[i % 2] for i in range(n)], csv, imgs)


def split_counts(split):
    y = split.labels[:, 0]
    src = np.array([s for s, _ in split.members])
    return {
        "pos_d1": int(((src == 0) & (y == 1)).sum()), "pos_d2": int(((src == 1) & (y == 1)).sum()),
        "neg_d1": int(((src == 0) & (y == 0)).sum()), "neg_d2": int(((src == 1) & (y == 0)).sum()),
    }


class TestPools:
    def test_deterministic(self, pc):
        a = partition_pools(pc, "Effusion", 3)
        b = partition_pools(pc, "Effusion", 3)
        assert all(np.array_equal(x, y) for x, y in zip(a, b))

    def test_patients_stay_together(self, pc):
        pools = partition_pools(pc, "Cardiomegaly", 1)
        where = {}
        for k, pool in enumerate(pools):
            for i in pool:
                where.setdefault(pc.csv["patientid"][i], set()).add(k)
        assert all(len(v) == 1 for v in where.values())
        assert any(n == 3 for n in pc.csv["patientid"].value_counts())

    def test_disjoint_and_covering(self, pc):
        pools = partition_pools(pc, "Effusion", 0)
        allidx = np.concatenate(pools)
        usable = np.flatnonzero(~np.isnan(pc.labels[:, pc.pathologies.index("Effusion")]))
        assert len(allidx) == len(set(allidx.tolist()))
        assert sorted(allidx.tolist()) == usable.tolist()

    def test_unknown_rows_excluded(self):
        ds = one_per_patient(10)
        y = np.array([1, 0, np.nan] * 3 + [1.0])
        pools = partition_pools(ds, y, 0)
        assert not {2, 5, 8} & set(np.concatenate(pools).tolist())

    def test_sizes_match_hash_simulation(self):
        ds = one_per_patient(100)
        pools = partition_pools(ds, "Mass", 0)
        buckets = [bucket_oracle(f"pid:p{i}", 0) for i in range(100)]
        expected = (sum(b < 70 for b in buckets), sum(70 <= b < 80 for b in buckets), sum(b >= 80 for b in buckets))
        assert tuple(len(p) for p in pools) == expected
        for got, want in zip(expected, (70, 10, 20)):
            assert abs(got - want) <= 10

    def test_bad_fractions(self, pc):
        with pytest.raises(ValueError):
            partition_pools(pc, "Effusion", 0, (0.5, 0.5, 0.5))


class TestBuild:
    def test_fixture_has_20_per_cell(self, cov_sources):
        for ds in cov_sources:
            for pool in partition_pools(ds, "Effusion", 0):
                y = ds.labels[pool, 0]
                assert (y == 1).sum() == 20 and (y == 0).sum() == 20

    def test_train_075(self, cov_sources):
        d1, d2 = cov_sources
        split = build_covariate(CovariateSpec(d1, d2, "Effusion", "Effusion", "train", 0.75, 0))
        assert len(split) == 40
        assert split_counts(split) == {"pos_d1": 5, "pos_d2": 15, "neg_d1": 15, "neg_d2": 5}

    def test_balanced_at_half(self, cov_sources):
        d1, d2 = cov_sources
        split = build_covariate(CovariateSpec(d1, d2, "Effusion", "Effusion", "train", 0.5, 0))
        assert split_counts(split) == {"pos_d1": 10, "pos_d2": 10, "neg_d1": 10, "neg_d2": 10}

    @pytest.mark.parametrize("mode", ["valid", "test"])
    def test_eval_modes_flip_ratio(self, cov_sources, mode):
        d1, d2 = cov_sources
        split = build_covariate(CovariateSpec(d1, d2, "Effusion", "Effusion", mode, 0.75, 0))
        assert split_counts(split)["pos_d1"] == 15

    def test_train_and_test_members_disjoint(self, cov_sources):
        d1, d2 = cov_sources
        train = build_covariate(CovariateSpec(d1, d2, "Effusion", "Effusion", "train", 0.3, 0))
        test = build_covariate(CovariateSpec(d1, d2, "Effusion", "Effusion", "test", 0.3, 0))
        assert not set(train.members) & set(test.members)

    @pytest.mark.parametrize("r", RATIOS)
    def test_invariants(self, cov_sources, r):
        d1, d2 = cov_sources
        split = build_covariate(CovariateSpec(d1, d2, "Effusion", "Effusion", "train", r, 0))
        c = split_counts(split)
        assert len(split) == 40 and split.labels.sum() == 20
        assert c["pos_d1"] / 20 == round_half_away((1 - r) * 20) / 20
        assert len(set(split.members)) == 40

    def test_deterministic(self, cov_sources):
        d1, d2 = cov_sources
        spec = CovariateSpec(d1, d2, "Effusion", "Effusion", "train", 0.25, 4)
        assert build_covariate(spec).members == build_covariate(spec).members

    def test_members_resolve_to_source_images(self, cov_sources):
        d1, d2 = cov_sources
        split = build_covariate(CovariateSpec(d1, d2, "Effusion", "Effusion", "train", 0.25, 0))
        for i, (s, j) in enumerate(split.members[:10]):
            src = (d1, d2)[s]
            assert np.array_equal(split.raw_image(i).pixels, src.raw_image(j).pixels)
            assert split.labels[i, 0] == src.labels[j, 0]
            assert split.csv["source_name"][i] == src.name

    def test_infeasible(self, cov_sources):
        d1, d2 = cov_sources
        no_pos = np.zeros(len(d1))
        with pytest.raises(InfeasiblePool):
            build_covariate(CovariateSpec(d1, d2, no_pos, "Effusion", "train", 0.5, 0))

    @pytest.mark.parametrize("r", [0.0, 1.0, -0.2, 1.5])
    def test_ratio_bounds(self, cov_sources, r):
        with pytest.raises(ValueError):
            CovariateSpec(*cov_sources, "Effusion", "Effusion", "train", r, 0)

    def test_round_half_away(self):
        assert [round_half_away(x) for x in (0.5, 1.5, 2.5, -0.5, 2.49)] == [1, 2, 3, -1, 2]


class TestClassMeanDifference:
    def test_identical_images_give_zero(self):
        imgs = [np.full((6, 6), 77, np.uint8)] * 4
        ds = ArrayDataset("Same", ["Mass"], [[1], [0], [1], [0]], None, imgs)
        assert np.abs(class_mean_difference(ds, "Mass", 4)).max() <= 1e-9

    def test_patch_localized(self):
        ds = patch_arrays(n=12, size=16, patch=(4, 8, 4, 8))
        diff = class_mean_difference(ds, "Nodule", 16)
        r, c = np.unravel_index(np.argmax(np.abs(diff)), diff.shape)
        assert 4 <= r < 8 and 4 <= c < 8

    def test_res_one_on_two_by_two(self):
        # bilinear to 1x1 samples the centre, which is the global mean for 2x2 inputs
        imgs = [np.array([[0, 100], [50, 250]], np.uint8), np.array([[10, 20], [30, 40]], np.uint8)]
        ds = ArrayDataset("Tiny", ["Mass"], [[1], [0]], None, imgs)
        diff = class_mean_difference(ds, "Mass", 1)
        scaled = [im.astype(float) / 255 * 2048 - 1024 for im in imgs]
        assert diff.shape == (1, 1)
        assert diff[0, 0] == pytest.approx(scaled[0].mean() - scaled[1].mean(), abs=1e-9)

    def test_empty_class(self):
        ds = ArrayDataset("One", ["Mass"], [[1], [1]], None, [np.zeros((2, 2), np.uint8)] * 2)
        with pytest.raises(EmptyClass):
            class_mean_difference(ds, "Mass", 2)
