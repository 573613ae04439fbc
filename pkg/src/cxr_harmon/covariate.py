"""Controlled covariate-shift splits from two sources, and class-mean difference images."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
import pandas as pd

from .dataset import Dataset
from .errors import EmptyClass, InfeasiblePool
from .taxonomy import Pathology
from .transforms import CenterCrop, Resize, TransformChain

MODES = ("train", "valid", "test")
Target = Union[str, Sequence[float], np.ndarray]


def round_half_away(x: float) -> int:
    return int(math.floor(abs(x) + 0.5)) * (1 if x >= 0 else -1)


def _bucket(key: str, seed: int) -> int:
    digest = hashlib.sha256(f"{seed}:{key}".encode()).digest()
    return int.from_bytes(digest[:8], "big") % 100


def target_vector(ds: Dataset, target: Target) -> np.ndarray:
    """Resolve a pathology name or an explicit 0/1/NaN vector to one label per row."""
    if isinstance(target, str):
        return ds.labels[:, ds.pathologies.index(Pathology(target))].copy()
    vec = np.asarray(target, dtype=np.float64).reshape(-1)
    if vec.shape[0] != len(ds):
        raise ValueError(f"target vector has {vec.shape[0]} entries for {len(ds)} rows")
    return vec


def partition_pools(
    ds: Dataset,
    target: Target,
    seed: int,
    fractions: tuple[float, float, float] = (0.7, 0.1, 0.2),
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Split labelled rows into train/valid/test pools, never splitting a patient.

    Each row is bucketed by ``sha256(f"{seed}:{key}") mod 100`` where ``key`` is
    the row's patientid (or its index when there is none) and the bucket is
    compared against the cumulative fractions.
    """
    if len(fractions) != 3 or abs(sum(fractions) - 1.0) > 1e-9 or min(fractions) < 0:
        raise ValueError(f"pool fractions must be three non-negative numbers summing to 1, got {fractions}")
    y = target_vector(ds, target)
    usable = np.flatnonzero(~np.isnan(y))
    has_pid = "patientid" in ds.csv.columns
    cut_train = round_half_away(fractions[0] * 100)
    cut_valid = round_half_away((fractions[0] + fractions[1]) * 100)
    pools: list[list[int]] = [[], [], []]
    for i in usable:
        pid = ds.csv["patientid"].iat[i] if has_pid else None
        key = f"idx:{i}" if pid is None or pd.isna(pid) else f"pid:{pid}"
        b = _bucket(key, seed)
        pools[0 if b < cut_train else 1 if b < cut_valid else 2].append(int(i))
    return tuple(np.asarray(p, dtype=np.int64) for p in pools)


@dataclass(frozen=True)
class CovariateSpec:
    d1: Dataset
    d2: Dataset
    d1_target: Target
    d2_target: Target
    mode: str = "train"
    ratio: float = 0.5
    seed: int = 0
    pool_fractions: tuple[float, float, float] = (0.7, 0.1, 0.2)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not 0.0 < self.ratio < 1.0:
            raise ValueError(f"ratio must be strictly between 0 and 1, got {self.ratio}")

    @property
    def effective_ratio(self) -> float:
        return self.ratio if self.mode == "train" else 1.0 - self.ratio


class CovariateDataset(Dataset):
    """A balanced single-label split whose source dataset correlates with the label.

    ``members`` lists ``(source, local_index)`` pairs with source 0 for ``d1``
    and 1 for ``d2``.
    """

    def __init__(self, spec: CovariateSpec, members: list[tuple[int, int, float]], n: int):
        self.spec = spec
        self.sources = (spec.d1, spec.d2)
        self.members = [(s, j) for s, j, _ in members]
        self.n = n
        names = [spec.d1.name, spec.d2.name]
        if names[0] == names[1]:
            names = [f"{names[0]}[0]", f"{names[1]}[1]"]
        self.source_names = names
        rows = []
        for s, j, _ in members:
            row = {"source_name": names[s], "source_index": j}
            src = self.sources[s].csv
            for col in ("patientid", "view", "offset_day_int"):
                if col in src.columns:
                    row[col] = src[col].iat[j]
            rows.append(row)
        csv = pd.DataFrame(rows, columns=["source_name", "source_index", "patientid", "view", "offset_day_int"])
        csv = csv.dropna(axis=1, how="all") if rows else csv[["source_name", "source_index"]]
        csv["has_masks"] = False
        labels = np.array([[y] for _, _, y in members], dtype=np.float64).reshape(-1, 1)
        super().__init__("CovariateDataset", ["target"], labels, csv)

    def _locate(self, i):
        s, j = self.members[i]
        return self.sources[s]._locate(j)

    def tree_lines(self):
        sp = self.spec
        return [
            f"├ d1 {sp.d1.header()}",
            f"└ d2 {sp.d2.header()}",
            f"mode={sp.mode} ratio={sp.ratio} seed={sp.seed} n={self.n}",
        ]


def _cells(ds: Dataset, target: Target, spec: CovariateSpec):
    pools = partition_pools(ds, target, spec.seed, spec.pool_fractions)
    pool = pools[MODES.index(spec.mode)]
    y = target_vector(ds, target)
    return pool[y[pool] == 1], pool[y[pool] == 0]


def build_covariate(spec: CovariateSpec) -> CovariateDataset:
    """Sample ``n`` positives and ``n`` negatives with source/label correlation set by the ratio.

    With effective ratio ``rho`` (``ratio`` in train mode, ``1 - ratio`` for
    valid and test), ``round((1 - rho) * n)`` positives and ``round(rho * n)``
    negatives come from ``d1``; the rest come from ``d2``. ``n`` is the smallest
    of the four pool cells, so the split size never depends on the ratio.
    """
    p1, n1 = _cells(spec.d1, spec.d1_target, spec)
    p2, n2 = _cells(spec.d2, spec.d2_target, spec)
    sizes = {"d1 positives": len(p1), "d1 negatives": len(n1), "d2 positives": len(p2), "d2 negatives": len(n2)}
    empty = [k for k, v in sizes.items() if v == 0]
    if empty:
        raise InfeasiblePool(f"{spec.mode} pool has no {', '.join(empty)} ({sizes})")
    n = min(sizes.values())
    rho = spec.effective_ratio
    pos_d1 = round_half_away((1.0 - rho) * n)
    neg_d1 = round_half_away(rho * n)

    rng = np.random.Generator(np.random.Philox(spec.seed))
    members: list[tuple[int, int, float]] = []
    for src, cell, k, y in (
        (0, p1, pos_d1, 1.0),
        (1, p2, n - pos_d1, 1.0),
        (0, n1, neg_d1, 0.0),
        (1, n2, n - neg_d1, 0.0),
    ):
        picked = np.sort(rng.choice(cell, size=k, replace=False)) if k else []
        members.extend((src, int(j), y) for j in picked)
    order = rng.permutation(len(members))
    return CovariateDataset(spec, [members[i] for i in order], n)


def class_mean_difference(ds: Dataset, target: Target, res: int) -> np.ndarray:
    """Mean preprocessed image of positives minus mean of negatives, shape ``(res, res)``."""
    y = target_vector(ds, target)
    pos = np.flatnonzero(y == 1)
    neg = np.flatnonzero(y == 0)
    if pos.size == 0 or neg.size == 0:
        raise EmptyClass(f"need at least one positive and one negative row, got {pos.size} and {neg.size}")
    chain = TransformChain([CenterCrop(), Resize(res)])

    def mean_of(rows):
        acc = np.zeros((res, res))
        for i in rows:
            acc += ds.get_sample(int(i), chain).img[0]
        return acc / len(rows)

    return mean_of(pos) - mean_of(neg)
