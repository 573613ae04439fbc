"""Pathology masks: box/bitmap geometry, rasterization, OR-merging, attachment."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Mapping, Sequence, Union

import numpy as np
import pandas as pd

from .errors import CsvParseError, DegenerateBox, NoMaskSource, ProfileError, ShapeMismatch
from .taxonomy import Pathology

if TYPE_CHECKING:
    from .dataset import Dataset

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Box:
    """Axis-aligned box in source pixel coordinates, half-open on the far edges."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if self.w < 1 or self.h < 1:
            raise DegenerateBox(f"box must have w, h >= 1, got w={self.w} h={self.h}")


@dataclass(frozen=True, eq=False)
class Bitmap:
    grid: np.ndarray

    def __post_init__(self):
        grid = np.asarray(self.grid)
        if grid.ndim != 2:
            raise ShapeMismatch(f"bitmap mask must be 2-D, got shape {grid.shape}")
        object.__setattr__(self, "grid", (grid != 0).astype(np.uint8))


MaskGeometry = Union[Box, Bitmap]


def rasterize(geom: MaskGeometry, height: int, width: int) -> np.ndarray:
    """Render a geometry to a ``uint8`` grid of shape ``(height, width)``."""
    if height < 1 or width < 1:
        raise ValueError(f"grid shape must be positive, got {height}x{width}")
    if isinstance(geom, Bitmap):
        grid = geom.grid
        if grid.shape == (height, width):
            return grid.copy()
        # nearest neighbour on pixel centres
        rows = np.minimum((np.arange(height) + 0.5) * grid.shape[0] / height, grid.shape[0] - 1)
        cols = np.minimum((np.arange(width) + 0.5) * grid.shape[1] / width, grid.shape[1] - 1)
        return grid[rows.astype(int)[:, None], cols.astype(int)[None, :]].copy()

    x0 = max(int(np.floor(geom.x)), 0)
    y0 = max(int(np.floor(geom.y)), 0)
    x1 = min(int(np.floor(geom.x + geom.w)), width)
    y1 = min(int(np.floor(geom.y + geom.h)), height)
    if x1 <= x0 or y1 <= y0:
        raise DegenerateBox(f"{geom} lies entirely outside a {height}x{width} image")
    out = np.zeros((height, width), dtype=np.uint8)
    out[y0:y1, x0:x1] = 1
    return out


def merge_or(masks: Sequence[np.ndarray]) -> np.ndarray:
    """Elementwise maximum of same-shaped grids (logical OR for binary input)."""
    if len(masks) == 0:
        raise ValueError("merge_or needs at least one mask")
    shape = np.shape(masks[0])
    for m in masks[1:]:
        if np.shape(m) != shape:
            raise ShapeMismatch(f"mask shapes differ: {shape} vs {np.shape(m)}")
    out = np.asarray(masks[0]).copy()
    for m in masks[1:]:
        out = np.maximum(out, m)
    return out


def render_mask_set(
    geoms: Mapping[str, Sequence[MaskGeometry]],
    pathologies: Sequence[str],
    height: int,
    width: int,
) -> dict[int, np.ndarray]:
    """Rasterize and OR-merge geometries, keyed by index into ``pathologies``.

    Names not in ``pathologies`` are skipped; boxes that fall outside the image
    are ignored with a warning.
    """
    index = {Pathology(p): i for i, p in enumerate(pathologies)}
    out: dict[int, np.ndarray] = {}
    for name, items in geoms.items():
        i = index.get(Pathology(name))
        if i is None:
            continue
        grids = []
        for g in items:
            try:
                grids.append(rasterize(g, height, width))
            except DegenerateBox as exc:
                log.warning("skipping mask: %s", exc)
        if grids:
            out[i] = merge_or(grids).astype(np.float64)
    return out


MaskTable = dict  # row index -> {pathology name -> [geometry, ...]}


@dataclass(frozen=True)
class MaskSource:
    """Where an adapter finds its masks.

    ``kind`` is ``"boxes"`` for a sidecar CSV with columns
    ``<image column>, pathology, x, y, w, h`` or ``"bitmaps"`` for a CSV with
    columns ``<image column>, pathology, mask`` naming 8-bit PNG files under
    ``maskpath`` (nonzero pixels are inside the mask).
    """

    kind: str
    csvpath: Path
    maskpath: Path | None = None

    @classmethod
    def from_dict(cls, data: Mapping, base: Path | None = None) -> "MaskSource":
        kind = data.get("kind")
        if kind not in ("boxes", "bitmaps"):
            raise ProfileError(f"mask_source.kind must be 'boxes' or 'bitmaps', got {kind!r}")
        if "csvpath" not in data:
            raise ProfileError("mask_source needs a csvpath")
        csvpath = _resolve(data["csvpath"], base)
        maskpath = _resolve(data["maskpath"], base) if data.get("maskpath") else None
        if kind == "bitmaps" and maskpath is None:
            raise ProfileError("bitmap mask_source needs a maskpath directory")
        return cls(kind, csvpath, maskpath)

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "csvpath": str(self.csvpath)}
        if self.maskpath is not None:
            d["maskpath"] = str(self.maskpath)
        return d


def _resolve(p, base: Path | None) -> Path:
    p = Path(p)
    if base is not None and not p.is_absolute():
        p = base / p
    return p


def read_mask_table(
    source: MaskSource, image_column: str, filenames: Sequence[str]
) -> dict[int, dict[str, list[MaskGeometry]]]:
    """Load a sidecar mask CSV and key it by dataset row via the image filename."""
    from .ingestion import decode_image

    try:
        table = pd.read_csv(source.csvpath, dtype=str, keep_default_na=False)
    except FileNotFoundError:
        raise
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise CsvParseError(f"{source.csvpath}: {exc}") from exc

    needed = [image_column, "pathology"]
    needed += ["x", "y", "w", "h"] if source.kind == "boxes" else ["mask"]
    missing = [c for c in needed if c not in table.columns]
    if missing:
        raise ProfileError(f"{source.csvpath}: missing mask columns {missing}")

    rows_by_file: dict[str, list[int]] = {}
    for i, f in enumerate(filenames):
        rows_by_file.setdefault(f, []).append(i)

    out: dict[int, dict[str, list[MaskGeometry]]] = {}
    for rec in table.to_dict("records"):
        rows = rows_by_file.get(rec[image_column])
        if not rows:
            continue
        if source.kind == "boxes":
            try:
                geom: MaskGeometry = Box(*(float(rec[k]) for k in ("x", "y", "w", "h")))
            except ValueError as exc:
                raise CsvParseError(f"{source.csvpath}: bad box {rec}: {exc}") from exc
        else:
            raw = decode_image(source.maskpath / rec["mask"], 8)
            geom = Bitmap(raw.pixels)
        name = str(Pathology(rec["pathology"]))
        for r in rows:
            out.setdefault(r, {}).setdefault(name, []).append(geom)
    return out


def attach_masks(ds: "Dataset", enabled: bool = True) -> "Dataset":
    """Return a copy of ``ds`` whose samples carry ``pathology_masks``.

    With ``enabled=False`` the copy never carries masks. Masks for pathologies
    that are not in ``ds.pathologies`` are dropped with a warning.
    """
    if not enabled:
        return ds._with_masks(None)
    table = ds._load_mask_table()
    if table is None:
        raise NoMaskSource(f"{ds.name} declares no mask source")
    known = set(ds.pathologies)
    kept: dict[int, dict[str, list[MaskGeometry]]] = {}
    dropped = set()
    for row, geoms in table.items():
        for name, items in geoms.items():
            if Pathology(name) in known:
                kept.setdefault(row, {})[name] = list(items)
            else:
                dropped.add(name)
    if dropped:
        log.warning("%s: dropping masks for pathologies not in dataset: %s", ds.name, sorted(dropped))
    return ds._with_masks(kept)
