"""Load a source dataset from an image directory and a metadata CSV via an adapter profile."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional

import numpy as np
import pandas as pd
from PIL import Image, UnidentifiedImageError

from .dataset import Dataset, RawImage, scale_pixels  # noqa: F401  (re-exported)
from .errors import BitDepthMismatch, CsvParseError, DecodeError, EmptyDataset, ProfileError
from .masks import MaskSource, read_mask_table
from .taxonomy import Pathology, Taxonomy

log = logging.getLogger(__name__)

_MODE_DEPTH = {"L": 8, "I;16": 16, "I;16B": 16, "I;16L": 16, "I": 16}

CANONICAL_VIEWS = ("PA", "AP", "AP Supine", "AP Erect")


@dataclass(frozen=True)
class ColumnCoding:
    """How one label column encodes present / absent / unknown."""

    column: str
    positive: frozenset = frozenset({"1", "1.0"})
    negative: frozenset = frozenset({"0", "0.0"})
    unknown: frozenset = frozenset({"", "-1", "-1.0"})

    def __post_init__(self):
        sets = (self.positive, self.negative, self.unknown)
        for a in range(3):
            for b in range(a + 1, 3):
                if sets[a] & sets[b]:
                    raise ProfileError(f"column {self.column!r}: value sets overlap on {sorted(sets[a] & sets[b])}")

    def decode(self, raw: str) -> float:
        v = raw.strip()
        if v in self.positive:
            return 1.0
        if v in self.negative:
            return 0.0
        return np.nan


@dataclass(frozen=True)
class DelimitedCoding:
    """A single column listing the present findings, e.g. ``"Cardiomegaly|Effusion"``.

    Listed pathologies are present and unlisted ones absent; the negation token
    (``"No Finding"``) marks every pathology absent; an empty cell is unknown.
    """

    column: str
    delimiter: str = "|"
    negation_token: Optional[str] = "No Finding"


@dataclass(frozen=True)
class AdapterProfile:
    name: str
    imgpath: Path
    csvpath: Path
    image_column: str
    pathologies: tuple[Pathology, ...]
    bit_depth: int = 8
    per_column: Optional[Mapping[Pathology, ColumnCoding]] = None
    delimited: Optional[DelimitedCoding] = None
    patientid_column: Optional[str] = None
    view_column: Optional[str] = None
    view_map: Mapping[str, str] = field(default_factory=dict)
    offset_column: Optional[str] = None
    mask_source: Optional[MaskSource] = None
    source_file: Optional[Path] = None

    def __post_init__(self):
        if self.bit_depth not in (8, 16):
            raise ProfileError(f"bit_depth must be 8 or 16, got {self.bit_depth}")
        if (self.per_column is None) == (self.delimited is None):
            raise ProfileError("configure exactly one of per_column or delimited labels")

    @property
    def label_mode(self) -> str:
        return "PerColumn" if self.per_column is not None else "DelimitedString"

    @classmethod
    def from_dict(cls, data: Mapping, base: Optional[Path] = None) -> "AdapterProfile":
        """Build a profile from its JSON form; relative paths resolve against ``base``."""

        def path(key):
            if key not in data:
                raise ProfileError(f"profile is missing {key!r}")
            p = Path(data[key])
            return base / p if base is not None and not p.is_absolute() else p

        try:
            labels = data["labels"]
            mode = labels["mode"]
        except (KeyError, TypeError):
            raise ProfileError("profile needs labels.mode") from None

        per_column = delimited = None
        if mode == "per_column":
            cols = labels.get("columns")
            if not isinstance(cols, Mapping) or not cols:
                raise ProfileError("per_column labels need a non-empty 'columns' map")
            defaults = {k: labels[k] for k in ("positive", "negative", "unknown") if k in labels}
            per_column = {}
            for name, spec in cols.items():
                spec = {"column": spec} if isinstance(spec, str) else dict(spec)
                merged = {**defaults, **spec}
                kw = {k: frozenset(str(x) for x in merged[k]) for k in ("positive", "negative", "unknown") if k in merged}
                per_column[Pathology(name)] = ColumnCoding(merged.get("column", name), **kw)
            pathologies = tuple(per_column)
        elif mode == "delimited":
            if "column" not in labels or "pathologies" not in labels:
                raise ProfileError("delimited labels need 'column' and 'pathologies'")
            delimited = DelimitedCoding(
                labels["column"], labels.get("delimiter", "|"), labels.get("negation_token", "No Finding")
            )
            pathologies = Taxonomy(labels["pathologies"]).names
        else:
            raise ProfileError(f"labels.mode must be 'per_column' or 'delimited', got {mode!r}")
        if len(set(pathologies)) != len(pathologies):
            raise ProfileError("duplicate pathologies in profile")

        if not data.get("image_column"):
            raise ProfileError("profile is missing 'image_column'")
        ms = data.get("mask_source")
        return cls(
            name=str(data.get("name", "Dataset")),
            imgpath=path("imgpath"),
            csvpath=path("csvpath"),
            image_column=data["image_column"],
            pathologies=pathologies,
            bit_depth=int(data.get("bit_depth", 8)),
            per_column=per_column,
            delimited=delimited,
            patientid_column=data.get("patientid_column"),
            view_column=data.get("view_column"),
            view_map=dict(data.get("view_map", {})),
            offset_column=data.get("offset_column"),
            mask_source=MaskSource.from_dict(ms, base) if ms else None,
        )

    @classmethod
    def load(cls, path) -> "AdapterProfile":
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ProfileError(f"{path}: invalid JSON: {exc}") from exc
        prof = cls.from_dict(data, base=path.parent)
        object.__setattr__(prof, "source_file", path.resolve())
        return prof


def decode_image(path, bit_depth: int) -> RawImage:
    """Read a grayscale PNG without any rescaling."""
    path = Path(path)
    try:
        with Image.open(path) as im:
            if im.format != "PNG":
                raise DecodeError(f"{path}: only PNG is supported, got {im.format}")
            depth = _MODE_DEPTH.get(im.mode)
            if depth is None:
                raise DecodeError(f"{path}: unsupported mode {im.mode!r}; grayscale PNG required")
            pixels = np.array(im)
    except (UnidentifiedImageError, OSError) as exc:
        raise DecodeError(f"{path}: {exc}") from exc
    if im.mode == "I" and pixels.size and (pixels.min() < 0 or pixels.max() > 65535):
        raise DecodeError(f"{path}: 32-bit pixels are not supported")
    if depth != bit_depth:
        raise BitDepthMismatch(f"{path}: file is {depth}-bit, profile expects {bit_depth}-bit")
    return RawImage(pixels.astype(np.uint16 if depth == 16 else np.uint8), depth)


def _canonical_view(raw: str, view_map: Mapping[str, str]) -> Optional[str]:
    raw = raw.strip()
    if not raw:
        return None
    if raw in view_map:
        return view_map[raw]
    for v in CANONICAL_VIEWS:
        if raw.upper() == v.upper():
            return v
    return raw


class FileDataset(Dataset):
    """A dataset backed by PNG files on disk, built by :func:`load_dataset`."""

    def __init__(self, profile: AdapterProfile, labels, csv, files: list[str], dropped: int):
        super().__init__(profile.name, profile.pathologies, labels, csv)
        self.profile = profile
        self.files = files
        self.dropped = dropped
        self._masks: dict = {}

    def _locate(self, i):
        return self, i

    def _raw_image(self, i):
        return decode_image(self.profile.imgpath / self.files[i], self.profile.bit_depth)

    def _raw_masks(self, i):
        return self._masks.get(i, {})

    def _load_mask_table(self):
        if self.profile.mask_source is None:
            return None
        return read_mask_table(self.profile.mask_source, self.profile.image_column, self.files)

    def _with_masks(self, table):
        out = super()._with_masks(table)
        out._masks = table or {}
        out.csv = self.csv.assign(has_masks=[i in out._masks for i in range(len(self))])
        return out


def load_dataset(profile: AdapterProfile | str | Path) -> FileDataset:
    """Read a profile's CSV and images into a harmonized dataset.

    Rows whose image file is missing are dropped with a warning and counted in
    ``FileDataset.dropped``.
    """
    if not isinstance(profile, AdapterProfile):
        profile = AdapterProfile.load(profile)
    if not profile.imgpath.is_dir():
        raise FileNotFoundError(f"image directory not found: {profile.imgpath}")
    try:
        raw = pd.read_csv(profile.csvpath, dtype=str, keep_default_na=False)
    except FileNotFoundError:
        raise FileNotFoundError(f"metadata csv not found: {profile.csvpath}") from None
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise CsvParseError(f"{profile.csvpath}: {exc}") from exc

    referenced = [profile.image_column, profile.patientid_column, profile.view_column, profile.offset_column]
    if profile.per_column is not None:
        referenced += [c.column for c in profile.per_column.values()]
    else:
        referenced.append(profile.delimited.column)
    missing = [c for c in referenced if c is not None and c not in raw.columns]
    if missing:
        raise ProfileError(f"{profile.csvpath}: profile references absent columns {missing}")

    present = raw[profile.image_column].map(lambda f: bool(f) and (profile.imgpath / f).is_file())
    dropped = int((~present).sum())
    if dropped:
        log.warning("%s: dropping %d of %d rows with missing image files", profile.name, dropped, len(raw))
    csv = raw[present.to_numpy()].reset_index(drop=True)
    if csv.empty:
        raise EmptyDataset(f"{profile.name}: no usable rows in {profile.csvpath}")

    labels = _decode_labels(csv, profile)

    if profile.patientid_column:
        csv["patientid"] = csv[profile.patientid_column].replace("", pd.NA)
    if profile.view_column:
        csv["view"] = csv[profile.view_column].map(lambda v: _canonical_view(v, profile.view_map))
    if profile.offset_column:
        csv["offset_day_int"] = pd.to_numeric(csv[profile.offset_column], errors="coerce").astype("Int64")
    csv["has_masks"] = False
    return FileDataset(profile, labels, csv, list(csv[profile.image_column]), dropped)


def _decode_labels(csv: pd.DataFrame, profile: AdapterProfile) -> np.ndarray:
    n = len(csv)
    labels = np.full((n, len(profile.pathologies)), np.nan)
    if profile.per_column is not None:
        for j, name in enumerate(profile.pathologies):
            coding = profile.per_column[name]
            labels[:, j] = [coding.decode(v) for v in csv[coding.column]]
        return labels

    coding = profile.delimited
    index = {p: j for j, p in enumerate(profile.pathologies)}
    for i, cell in enumerate(csv[coding.column]):
        tokens = [t.strip() for t in cell.split(coding.delimiter) if t.strip()]
        if not tokens:
            continue
        labels[i, :] = 0.0
        for t in tokens:
            if coding.negation_token is not None and t == coding.negation_token:
                continue
            j = index.get(Pathology(t))
            if j is not None:
                labels[i, j] = 1.0
    return labels
