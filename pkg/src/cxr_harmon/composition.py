"""Dataset algebra: relabel, merge, subset, view filtering and one-image-per-patient."""

from __future__ import annotations

import operator
import re
import warnings
from typing import Sequence

import numpy as np
import pandas as pd

from .dataset import Dataset
from .errors import DuplicateTarget, IndexOutOfRange, NoPatientIdColumn, NoViewColumn, PathologyMismatch
from .taxonomy import Pathology


class DroppedPathologiesWarning(UserWarning):
    """Issued by :func:`relabel` when source columns are not in the target list."""

    def __init__(self, names: list[str]):
        super().__init__(f"relabel dropped pathologies not in target: {names}")
        self.names = names


def relabel(ds: Dataset, target: Sequence[str]) -> Dataset:
    """Return ``ds`` with label columns added, removed and reordered to match ``target``.

    Target pathologies the dataset lacks become all-NaN columns. Columns not in
    ``target`` are dropped and reported through :class:`DroppedPathologiesWarning`.
    """
    names = [Pathology(t) for t in target]
    if len(set(names)) != len(names):
        dupes = sorted({n for n in names if names.count(n) > 1})
        raise DuplicateTarget(f"target lists {dupes} more than once")
    labels = np.full((len(ds), len(names)), np.nan)
    for j, name in enumerate(names):
        if name in ds.pathologies:
            labels[:, j] = ds.labels[:, ds.pathologies.index(name)]
    dropped = [str(p) for p in ds.pathologies if p not in names]
    if dropped:
        warnings.warn(DroppedPathologiesWarning(dropped), stacklevel=2)
    labels.setflags(write=False)
    return ds._replace(pathologies=tuple(names), labels=labels)


class SubsetDataset(Dataset):
    def __init__(self, parent: Dataset, idxs: Sequence[int]):
        idxs = np.asarray(idxs, dtype=np.int64).reshape(-1)
        bad = idxs[(idxs < 0) | (idxs >= len(parent))]
        if bad.size:
            raise IndexOutOfRange(f"indices {bad[:5].tolist()} out of range for {len(parent)} samples")
        super().__init__("SubsetDataset", parent.pathologies, parent.labels[idxs], parent.csv.iloc[idxs])
        self.parent = parent
        self.idxs = idxs
        self.pathology_masks = parent.pathology_masks

    def _locate(self, i):
        return self.parent._locate(int(self.idxs[i]))

    def header(self):
        return f"{self.name} num_samples={len(self)}"

    def tree_lines(self):
        return [f"└ of {self.parent.header()}"]


class MergeDataset(Dataset):
    """Children concatenated in order, with ``source_name``/``source_index`` columns added."""

    def __init__(self, children: Sequence[Dataset]):
        children = list(children)
        if not children:
            raise ValueError("merge needs at least one dataset")
        first = children[0].pathologies
        for c in children[1:]:
            if c.pathologies != first:
                raise PathologyMismatch(
                    f"{c.name} has pathologies {list(map(str, c.pathologies))}, expected {list(map(str, first))}; "
                    "relabel the datasets to a common list before merging"
                )
        frames = []
        for c in children:
            f = c.csv.copy()
            f["source_name"] = c.name
            f["source_index"] = np.arange(len(c))
            frames.append(f)
        csv = pd.concat(frames, ignore_index=True, sort=False)
        labels = np.concatenate([c.labels for c in children], axis=0)
        super().__init__("MergeDataset", first, labels, csv)
        self.children = children
        self.offsets = np.cumsum([0] + [len(c) for c in children])
        self.pathology_masks = any(c.pathology_masks for c in children)

    def _locate(self, i):
        k = int(np.searchsorted(self.offsets, i, side="right")) - 1
        return self.children[k]._locate(i - int(self.offsets[k]))

    def header(self):
        return f"{self.name} num_samples={len(self)}"

    def tree_lines(self):
        last = len(self.children) - 1
        return [f"{'└' if k == last else '├'}{k} {c.header()}" for k, c in enumerate(self.children)]


def merge(children: Sequence[Dataset]) -> MergeDataset:
    return MergeDataset(children)


def subset(ds: Dataset, idxs: Sequence[int]) -> SubsetDataset:
    return SubsetDataset(ds, idxs)


def filter_views(ds: Dataset, views: Sequence[str]) -> SubsetDataset:
    if "view" not in ds.csv.columns:
        raise NoViewColumn(f"{ds.name} has no view column")
    keep = ds.csv["view"].isin(list(views)).to_numpy()
    return SubsetDataset(ds, np.flatnonzero(keep))


def unique_patients(ds: Dataset) -> SubsetDataset:
    """Keep the first (lowest-index) image of each patient."""
    if "patientid" not in ds.csv.columns:
        raise NoPatientIdColumn(f"{ds.name} has no patientid column")
    pid = ds.csv["patientid"]
    # rows without a patient id cannot be deduplicated and are kept
    keep = ~pid.duplicated(keep="first") | pid.isna()
    return SubsetDataset(ds, np.flatnonzero(keep.to_numpy()))


def where(ds: Dataset, predicate: str) -> np.ndarray:
    """Indices of rows satisfying ``"column op value"`` with op in ``== != < <= > >=``."""
    m = re.fullmatch(r"\s*(.+?)\s*(==|!=|<=|>=|<|>)\s*(.*?)\s*", predicate)
    if not m:
        raise ValueError(f"cannot parse predicate {predicate!r}; expected 'column op value'")
    col, op, value = m.groups()
    if col not in ds.csv.columns:
        raise KeyError(f"no column {col!r} in {ds.name}")
    value = value.strip("'\"")
    fn = {"==": operator.eq, "!=": operator.ne, "<": operator.lt, "<=": operator.le,
          ">": operator.gt, ">=": operator.ge}[op]
    series = ds.csv[col]
    try:
        num = float(value)
        lhs = pd.to_numeric(series, errors="coerce")
        mask = fn(lhs, num)
    except ValueError:
        mask = fn(series.astype("string"), value).fillna(False)
    return np.flatnonzero(np.asarray(mask, dtype=bool))
