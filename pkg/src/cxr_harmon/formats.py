"""File formats: manifests, stats JSON, calibration params, tensor and grid exports.

Every file is written atomically (temporary file in the target directory,
then ``os.replace``). JSON documents carry a ``format_version`` field.
"""

from __future__ import annotations

import io as _io
import json
import os
import tempfile
from pathlib import Path
from typing import Mapping, Optional, Union

import numpy as np
import pandas as pd
from PIL import Image

from .dataset import STANDARD_COLUMNS, Dataset, totals
from .errors import ProfileError, ShapeMismatch

FORMAT_VERSION = 1
PathLike = Union[str, os.PathLike]


def atomic_write(path: PathLike, data: Union[bytes, str]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_json(path: PathLike, doc: Mapping) -> Path:
    doc = {"format_version": FORMAT_VERSION, **doc}
    return atomic_write(path, json.dumps(doc, indent=2, sort_keys=False, allow_nan=False) + "\n")


# -- stats -------------------------------------------------------------------


def stats_document(ds: Dataset) -> dict:
    tot = totals(ds)
    return {
        "name": ds.name,
        "num_samples": len(ds),
        "views": ds.views(),
        "pathologies": [str(p) for p in ds.pathologies],
        "totals": {k: {"0": v[0.0], "1": v[1.0]} for k, v in tot.items()},
    }


# -- manifests ---------------------------------------------------------------


def sidecar_path(manifest: PathLike) -> Path:
    return Path(manifest).with_suffix(".json")


def manifest_frame(ds: Dataset) -> pd.DataFrame:
    """Rows identify each sample by its leaf source and index, then standard columns and labels."""
    prov = [ds.provenance(i) for i in range(len(ds))]
    frame = pd.DataFrame(
        {"source_name": [p[0] for p in prov], "source_index": [p[1] for p in prov]}
    )
    for col in STANDARD_COLUMNS:
        if col in ds.csv.columns:
            frame[col] = ds.csv[col].to_numpy()
    for j, name in enumerate(ds.pathologies):
        frame[str(name)] = ds.labels[:, j]
    return frame


def _leaf_profiles(ds: Dataset) -> dict[str, Optional[str]]:
    from .ingestion import FileDataset

    out: dict[str, Optional[str]] = {}
    seen: dict[str, object] = {}
    for i in range(len(ds)):
        leaf, _ = ds._locate(i)
        src = leaf.profile.source_file if isinstance(leaf, FileDataset) else None
        key = src if src is not None else id(leaf)
        if seen.setdefault(leaf.name, key) != key:
            raise ValueError(f"two different source datasets are both named {leaf.name!r}")
        out[leaf.name] = str(src) if src is not None else None
    return out


def write_manifest(ds: Dataset, path: PathLike, extra: Optional[Mapping] = None) -> tuple[Path, Path]:
    """Write ``<path>`` (CSV) and its ``.json`` sidecar naming pathologies and source profiles."""
    path = Path(path)
    frame = manifest_frame(ds)
    buf = _io.StringIO()
    frame.to_csv(buf, index=False, lineterminator="\n", na_rep="")
    atomic_write(path, buf.getvalue())
    doc = {
        "kind": "manifest",
        "name": ds.name,
        "num_samples": len(ds),
        "pathologies": [str(p) for p in ds.pathologies],
        "sources": _leaf_profiles(ds),
    }
    if extra:
        doc.update(extra)
    side = write_json(sidecar_path(path), doc)
    return path, side


def read_json(path: PathLike) -> dict:
    path = Path(path)
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ProfileError(f"{path}: invalid JSON: {exc}") from exc


def load_manifest(path: PathLike) -> Dataset:
    """Rebuild a dataset from a manifest CSV, loading each source through its profile."""
    from .ingestion import load_dataset

    path = Path(path)
    side = read_json(sidecar_path(path))
    if side.get("kind") != "manifest":
        raise ProfileError(f"{sidecar_path(path)} is not a manifest sidecar")
    frame = pd.read_csv(path, dtype={"source_name": str, "patientid": str, "view": str})
    sources = {}
    for name, prof in side.get("sources", {}).items():
        if prof is None:
            raise ProfileError(f"manifest source {name!r} has no profile to load images from")
        p = Path(prof)
        if not p.is_absolute():
            p = path.parent / p
        sources[name] = load_dataset(p)
    return ManifestDataset(side.get("name", path.stem), side["pathologies"], frame, sources)


class ManifestDataset(Dataset):
    """Dataset whose rows point at ``(source_name, source_index)`` in loaded source datasets."""

    def __init__(self, name: str, pathologies, frame: pd.DataFrame, sources: Mapping[str, Dataset]):
        missing = [c for c in ("source_name", "source_index", *map(str, pathologies)) if c not in frame.columns]
        if missing:
            raise ProfileError(f"manifest lacks columns {missing}")
        unknown = sorted(set(frame["source_name"]) - set(sources))
        if unknown:
            raise ProfileError(f"manifest rows reference unknown sources {unknown}")
        labels = frame[[str(p) for p in pathologies]].to_numpy(dtype=np.float64)
        keep = ["source_name", "source_index"] + [c for c in STANDARD_COLUMNS if c in frame.columns]
        csv = frame[keep].copy()
        if "has_masks" in csv.columns:
            csv["has_masks"] = csv["has_masks"].astype(str).str.lower().eq("true")
        if "offset_day_int" in csv.columns:
            csv["offset_day_int"] = csv["offset_day_int"].astype("Int64")
        super().__init__(name, pathologies, labels, csv)
        self.sources = dict(sources)
        self.refs = list(zip(frame["source_name"], frame["source_index"].astype(int)))
        for src, j in self.refs:
            if not 0 <= j < len(self.sources[src]):
                raise ProfileError(f"manifest row points at {src}[{j}], which does not exist")

    def _locate(self, i):
        src, j = self.refs[i]
        return self.sources[src]._locate(j)


def load_input(path: PathLike) -> Dataset:
    """Load either an adapter profile (``.json``) or a manifest (``.csv`` with sidecar)."""
    from .ingestion import load_dataset

    path = Path(path)
    if path.suffix.lower() == ".csv":
        return load_manifest(path)
    if not path.exists():
        raise FileNotFoundError(f"input not found: {path}")
    return load_dataset(path)


# -- calibration params --------------------------------------------------------


def write_params(path: PathLike, params: Mapping[str, float]) -> Path:
    return write_json(path, {"kind": "calibration", "params": dict(params)})


def read_params(path: PathLike) -> dict[str, float]:
    doc = read_json(path)
    params = doc.get("params", {k: v for k, v in doc.items() if k not in ("format_version", "kind")})
    return {str(k): float(v) for k, v in params.items()}


# -- tensors and grids --------------------------------------------------------


def write_tensor(path: PathLike, arr: np.ndarray, extra: Optional[Mapping] = None) -> tuple[Path, Path]:
    """Write float32 little-endian raw bytes plus a JSON header next to them."""
    path = Path(path)
    data = np.ascontiguousarray(arr, dtype="<f4")
    atomic_write(path, data.tobytes())
    header = {"shape": list(data.shape), "dtype": "float32", "byteorder": "little", "range": [-1024, 1024]}
    if extra:
        header.update(extra)
    return path, write_json(path.with_suffix(".json"), header)


def read_tensor(path: PathLike) -> np.ndarray:
    path = Path(path)
    header = read_json(path.with_suffix(".json"))
    return np.frombuffer(path.read_bytes(), dtype="<f4").reshape(header["shape"])


def write_grid_png(path: PathLike, grid: np.ndarray, extra: Optional[Mapping] = None) -> tuple[Path, Path]:
    """Save a float grid as a 16-bit PNG, mapping [min, max] onto [0, 65535].

    The sidecar records ``min``/``max`` so ``value = min + pixel / 65535 * (max - min)``.
    """
    path = Path(path)
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 2:
        raise ShapeMismatch(f"grid must be 2-D, got {grid.shape}")
    lo, hi = float(grid.min()), float(grid.max())
    span = hi - lo
    pixels = np.zeros(grid.shape, np.uint16) if span == 0 else np.rint((grid - lo) / span * 65535).astype(np.uint16)
    buf = _io.BytesIO()
    Image.fromarray(pixels).save(buf, format="PNG")
    atomic_write(path, buf.getvalue())
    doc = {"kind": "grid", "shape": list(grid.shape), "min": lo, "max": hi, "png_max": 65535}
    if extra:
        doc.update(extra)
    return path, write_json(path.with_suffix(".json"), doc)


def read_grid_png(path: PathLike) -> np.ndarray:
    path = Path(path)
    doc = read_json(path.with_suffix(".json"))
    with Image.open(path) as im:
        pixels = np.array(im).astype(np.float64)
    return doc["min"] + pixels / 65535.0 * (doc["max"] - doc["min"])
