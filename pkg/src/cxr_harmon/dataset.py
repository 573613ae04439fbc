"""The harmonized dataset: pathology list, tri-state label matrix, metadata table, samples."""

from __future__ import annotations

import copy
import pprint
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from .errors import IndexOutOfRange, ShapeMismatch
from .masks import MaskGeometry, render_mask_set
from .taxonomy import Pathology, Taxonomy, TriState
from .transforms import TransformChain

STANDARD_COLUMNS = ("patientid", "view", "offset_day_int", "has_masks")


@dataclass(frozen=True, eq=False)
class RawImage:
    """Decoded grayscale pixels exactly as stored, plus the encoding bit depth."""

    pixels: np.ndarray
    bit_depth: int

    def __post_init__(self):
        if self.bit_depth not in (8, 16):
            raise ValueError(f"bit_depth must be 8 or 16, got {self.bit_depth}")
        if self.pixels.ndim != 2 or 0 in self.pixels.shape:
            raise ShapeMismatch(f"expected a non-empty 2-D pixel grid, got {self.pixels.shape}")
        top = (1 << self.bit_depth) - 1
        if self.pixels.min() < 0 or self.pixels.max() > top:
            raise ValueError(f"pixels outside [0, {top}]")

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


def scale_pixels(img: RawImage) -> np.ndarray:
    """Map the full representable range of the bit depth onto [-1024, 1024].

    The mapping uses the encoding's possible range, never the image's own
    min/max, so contrast is not stretched. Output has shape ``(1, H, W)``.
    """
    top = float((1 << img.bit_depth) - 1)
    out = img.pixels.astype(np.float64) / top * 2048.0 - 1024.0
    return out[None, :, :]


@dataclass(eq=False)
class Sample:
    index: int
    img: np.ndarray
    lab: np.ndarray
    metadata: dict
    pathology_masks: Optional[dict[int, np.ndarray]] = None


class Dataset:
    """A collection of samples aligned row-for-row with ``labels`` and ``csv``.

    ``labels`` is a float matrix holding 1.0 (present), 0.0 (absent) or NaN
    (unknown); ``state`` exposes the same cells as :class:`TriState`. Datasets
    are not mutated after construction; every tool returns a new object.
    """

    def __init__(self, name: str, pathologies: Sequence[str], labels, csv: pd.DataFrame):
        self.name = name
        self.pathologies: tuple[Pathology, ...] = Taxonomy(pathologies).names
        labels = np.array(labels, dtype=np.float64).reshape(-1, len(self.pathologies))
        bad = ~(np.isnan(labels) | (labels == 0) | (labels == 1))
        if bad.any():
            raise ValueError(f"labels must be 0, 1 or NaN; found {np.unique(labels[bad])}")
        labels.setflags(write=False)
        self.labels = labels
        self.csv = csv.reset_index(drop=True)
        if len(self.csv) != len(self.labels):
            raise ShapeMismatch(f"csv has {len(self.csv)} rows but labels has {len(self.labels)}")
        self.pathology_masks = False

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def num_samples(self) -> int:
        return len(self)

    def state(self, i: int, pathology: str) -> TriState:
        return TriState.from_numeric(self.labels[i, self.pathologies.index(Pathology(pathology))])

    def _check_index(self, i: int) -> int:
        if not isinstance(i, (int, np.integer)) or not 0 <= i < len(self):
            raise IndexOutOfRange(f"index {i} out of range for {self.name} with {len(self)} samples")
        return int(i)

    # subclasses resolve a row to the leaf dataset holding its pixels
    def _locate(self, i: int) -> tuple["Dataset", int]:
        raise NotImplementedError

    def _raw_image(self, i: int) -> RawImage:
        raise NotImplementedError

    def _raw_masks(self, i: int) -> dict[str, list[MaskGeometry]]:
        return {}

    def _load_mask_table(self):
        return None

    def _with_masks(self, table) -> "Dataset":
        out = copy.copy(self)
        out.pathology_masks = table is not None
        return out

    def _replace(self, **fields) -> "Dataset":
        out = copy.copy(self)
        for k, v in fields.items():
            setattr(out, k, v)
        return out

    def provenance(self, i: int) -> tuple[str, int]:
        leaf, j = self._locate(self._check_index(i))
        return leaf.name, j

    def raw_image(self, i: int) -> RawImage:
        leaf, j = self._locate(self._check_index(i))
        return leaf._raw_image(j)

    def get_sample(self, i: int, transform: Optional[TransformChain] = None, seed: Optional[int] = None) -> Sample:
        i = self._check_index(i)
        leaf, j = self._locate(i)
        raw = leaf._raw_image(j)
        img = scale_pixels(raw)
        masks = None
        if self.pathology_masks:
            masks = render_mask_set(leaf._raw_masks(j), self.pathologies, raw.height, raw.width)
        if transform is not None:
            img, masks = transform(img, masks, seed=seed)
        return Sample(
            index=i,
            img=img,
            lab=self.labels[i].copy(),
            metadata=self.csv.iloc[i].to_dict(),
            pathology_masks=masks,
        )

    def __getitem__(self, i: int) -> Sample:
        return self.get_sample(i)

    def totals(self) -> dict[str, dict[float, int]]:
        return totals(self)

    def views(self) -> list[str]:
        if "view" not in self.csv.columns:
            return []
        return [str(v) for v in pd.unique(self.csv["view"].dropna())]

    def header(self) -> str:
        text = f"{self.name} num_samples={len(self)}"
        views = self.views()
        if views:
            text += f" views={views}"
        return text

    def tree_lines(self) -> list[str]:
        return []

    def __str__(self) -> str:
        return render_summary(self)

    def __repr__(self) -> str:
        return self.header()


class ArrayDataset(Dataset):
    """In-memory dataset over integer pixel grids; used for fixtures and tests."""

    def __init__(
        self,
        name: str,
        pathologies: Sequence[str],
        labels,
        csv: Optional[pd.DataFrame] = None,
        images: Sequence[np.ndarray] = (),
        bit_depth: int = 8,
        masks: Optional[dict[int, dict[str, list[MaskGeometry]]]] = None,
    ):
        labels = np.asarray(labels, dtype=np.float64)
        if csv is None:
            csv = pd.DataFrame(index=range(labels.shape[0]))
        csv = csv.copy()
        if "has_masks" not in csv.columns:
            csv["has_masks"] = False
        super().__init__(name, pathologies, labels, csv)
        if len(images) != len(self):
            raise ShapeMismatch(f"{len(images)} images for {len(self)} label rows")
        self._images = [RawImage(np.asarray(im), bit_depth) for im in images]
        self._mask_source = masks
        self._masks: dict = {}

    def _locate(self, i):
        return self, i

    def _raw_image(self, i):
        return self._images[i]

    def _raw_masks(self, i):
        return self._masks.get(i, {})

    def _load_mask_table(self):
        return self._mask_source

    def _with_masks(self, table):
        out = super()._with_masks(table)
        out._masks = table or {}
        out.csv = self.csv.assign(has_masks=[i in out._masks for i in range(len(self))])
        return out


def totals(ds: Dataset) -> dict[str, dict[float, int]]:
    """Per pathology, the count of absent (0.0) and present (1.0) labels. Unknown is not counted."""
    out = {}
    for j, name in enumerate(ds.pathologies):
        col = ds.labels[:, j]
        out[str(name)] = {0.0: int(np.sum(col == 0)), 1.0: int(np.sum(col == 1))}
    return out


def render_summary(ds: Dataset) -> str:
    lines = [ds.header(), *ds.tree_lines(), pprint.pformat(totals(ds), sort_dicts=False)]
    return "\n".join(lines)
