"""Synthetic desk-scale corpora mimicking the CSV layouts of public chest X-ray datasets.

Nothing here is real patient data. Each ``make_*`` function writes PNG images,
a metadata CSV and an adapter profile under ``root`` and returns the profile path.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pandas as pd
from PIL import Image

from .covariate import _bucket, round_half_away
from .dataset import ArrayDataset

NIH_PATHOLOGIES = [
    "Atelectasis", "Consolidation", "Infiltration", "Pneumothorax", "Edema", "Emphysema",
    "Fibrosis", "Effusion", "Pneumonia", "Pleural_Thickening", "Cardiomegaly", "Nodule",
    "Mass", "Hernia",
]

NIH_FINDINGS = [
    "Cardiomegaly|Effusion", "No Finding", "Atelectasis", "Effusion|Infiltration",
    "No Finding", "Pleural_Thickening", "Mass|Nodule", "Pneumothorax",
    "No Finding", "Cardiomegaly", "Edema|Effusion|Pneumonia", "Hernia",
]

CHEX_PATHOLOGIES = ["Atelectasis", "Cardiomegaly", "Consolidation", "Edema", "Pleural Effusion"]


def write_png(path: Path, pixels: np.ndarray) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(pixels).save(path, format="PNG")


def _noise(rng, shape, bit_depth):
    top = (1 << bit_depth) - 1
    dtype = np.uint16 if bit_depth == 16 else np.uint8
    return rng.integers(0, top + 1, size=shape).astype(dtype)


def _dump(root: Path, name: str, profile: dict) -> Path:
    path = root / f"{name}.json"
    path.write_text(json.dumps(profile, indent=2))
    return path


def make_nih_fixture(root, drop_files: int = 0) -> Path:
    """12 rows, pipe-delimited findings, 8-bit 12x10 images, bounding-box masks on two rows.

    ``drop_files`` leaves that many trailing images unwritten to exercise row dropping.
    """
    root = Path(root) / "nih"
    (root / "images").mkdir(parents=True, exist_ok=True)
    rng = np.random.Generator(np.random.Philox(101))
    rows = []
    for i, finding in enumerate(NIH_FINDINGS):
        fname = f"{i:08d}_000.png"
        if i < len(NIH_FINDINGS) - drop_files:
            write_png(root / "images" / fname, _noise(rng, (12, 10), 8))
        rows.append({
            "Image Index": fname,
            "Finding Labels": finding,
            "Follow-up #": i % 3,
            "Patient ID": f"{1000 + i // 2}",
            "Patient Age": 30 + i,
            "Patient Gender": "F" if i % 2 else "M",
            "View Position": "PA" if i % 4 else "AP",
        })
    pd.DataFrame(rows).to_csv(root / "Data_Entry.csv", index=False)
    pd.DataFrame([
        {"Image Index": "00000000_000.png", "pathology": "Cardiomegaly", "x": 2, "y": 3, "w": 5, "h": 4},
        {"Image Index": "00000000_000.png", "pathology": "Effusion", "x": 0, "y": 6, "w": 3, "h": 4},
        {"Image Index": "00000003_000.png", "pathology": "Infiltration", "x": 4, "y": 4, "w": 3, "h": 3},
    ]).to_csv(root / "BBox_List.csv", index=False)
    return _dump(root, "nih", {
        "name": "NIH_Dataset",
        "imgpath": "images",
        "csvpath": "Data_Entry.csv",
        "image_column": "Image Index",
        "bit_depth": 8,
        "labels": {"mode": "delimited", "column": "Finding Labels", "delimiter": "|",
                   "negation_token": "No Finding", "pathologies": NIH_PATHOLOGIES},
        "patientid_column": "Patient ID",
        "view_column": "View Position",
        "offset_column": "Follow-up #",
        "mask_source": {"kind": "boxes", "csvpath": "BBox_List.csv"},
    })


def make_chexpert_fixture(root) -> Path:
    """10 rows, one column per pathology coded 1.0 / 0.0 / -1.0 / blank, frontal and lateral views."""
    root = Path(root) / "chex"
    rng = np.random.Generator(np.random.Philox(202))
    codes = ["1.0", "0.0", "-1.0", ""]
    rows = []
    for i in range(10):
        fname = f"patient{i // 2:05d}_view{i % 2}.png"
        write_png(root / "images" / fname, _noise(rng, (10, 14), 8))
        row = {"Path": fname, "Sex": "Female" if i % 3 else "Male",
               "Frontal/Lateral": "Lateral" if i == 9 else "Frontal",
               "AP/PA": "" if i == 9 else ("AP" if i % 2 else "PA")}
        for j, p in enumerate(CHEX_PATHOLOGIES):
            row[p] = codes[(i + j) % 4]
        rows.append(row)
    frame = pd.DataFrame(rows)
    frame["view"] = ["Lateral" if r["Frontal/Lateral"] == "Lateral" else r["AP/PA"] for r in rows]
    frame.to_csv(root / "train.csv", index=False)
    return _dump(root, "chex", {
        "name": "CheX_Dataset",
        "imgpath": "images",
        "csvpath": "train.csv",
        "image_column": "Path",
        "bit_depth": 8,
        "labels": {"mode": "per_column", "positive": ["1.0", "1"], "negative": ["0.0", "0"],
                   "unknown": ["-1.0", "-1", ""],
                   "columns": {("Effusion" if p == "Pleural Effusion" else p): p for p in CHEX_PATHOLOGIES}},
        "view_column": "view",
    })


def make_padchest_fixture(root, n: int = 64) -> Path:
    """``n`` rows of 16-bit 9x16 images with DICOM-style view codes and patient sex."""
    root = Path(root) / "pc"
    rng = np.random.Generator(np.random.Philox(303))
    views = ["POSTEROANTERIOR", "ANTEROPOSTERIOR", "AP_horizontal", "LATERAL"]
    rows = []
    for i in range(n):
        fname = f"{i:04d}.png"
        write_png(root / "images" / fname, _noise(rng, (9, 16), 16))
        labels = []
        if i % 3 == 0:
            labels.append("cardiomegaly")
        if i % 5 == 0:
            labels.append("effusion")
        if i % 7 == 0:
            labels.append("atelectasis")
        rows.append({
            "ImageID": fname,
            "PatientID": f"pc{i // 3}",
            "PatientSex_DICOM": "F" if i % 2 else "M",
            "ViewPosition_DICOM": views[i % 4],
            "StudyDate_DICOM": 20000 + i,
            "Labels": ";".join(labels) if labels else ("normal" if i % 11 else ""),
        })
    pd.DataFrame(rows).to_csv(root / "pc.csv", index=False)
    return _dump(root, "pc", {
        "name": "PC_Dataset",
        "imgpath": "images",
        "csvpath": "pc.csv",
        "image_column": "ImageID",
        "bit_depth": 16,
        "labels": {"mode": "delimited", "column": "Labels", "delimiter": ";", "negation_token": "normal",
                   "pathologies": ["Atelectasis", "Cardiomegaly", "Effusion"]},
        "patientid_column": "PatientID",
        "view_column": "ViewPosition_DICOM",
        "view_map": {"POSTEROANTERIOR": "PA", "ANTEROPOSTERIOR": "AP", "AP_horizontal": "AP Supine",
                     "LATERAL": "Lateral"},
        "offset_column": "StudyDate_DICOM",
    })


def make_constant_fixture(root, value: int = 255, size: tuple[int, int] = (12, 12), bit_depth: int = 8) -> Path:
    """Two rows of constant images, e.g. all-255 for endpoint checks."""
    root = Path(root) / f"const{value}"
    dtype = np.uint16 if bit_depth == 16 else np.uint8
    rows = []
    for i in range(2):
        fname = f"c{i}.png"
        write_png(root / "images" / fname, np.full(size, value, dtype=dtype))
        rows.append({"file": fname, "Effusion": "1" if i else "0"})
    pd.DataFrame(rows).to_csv(root / "meta.csv", index=False)
    return _dump(root, f"const{value}", {
        "name": "Constant_Dataset",
        "imgpath": "images",
        "csvpath": "meta.csv",
        "image_column": "file",
        "bit_depth": bit_depth,
        "labels": {"mode": "per_column", "columns": {"Effusion": "Effusion"}},
    })


def covariate_patient_ids(prefix: str, seed: int, per_cell: int, fractions=(0.7, 0.1, 0.2)):
    """Patient ids that hash into each pool, ``2 * per_cell`` per pool (train, valid, test)."""
    cut_train = round_half_away(fractions[0] * 100)
    cut_valid = round_half_away((fractions[0] + fractions[1]) * 100)
    pools: list[list[str]] = [[], [], []]
    k = 0
    while min(len(p) for p in pools) < 2 * per_cell:
        pid = f"{prefix}{k}"
        b = _bucket(f"pid:{pid}", seed)
        pool = pools[0 if b < cut_train else 1 if b < cut_valid else 2]
        if len(pool) < 2 * per_cell:
            pool.append(pid)
        k += 1
    return pools


def covariate_arrays(seed: int = 0, per_cell: int = 20, size: int = 8):
    """Two in-memory sources with exactly ``per_cell`` positives and negatives in every pool.

    Source 1 images are darker than source 2, a nuisance feature a model could latch onto.
    """
    out = []
    for s, (prefix, level) in enumerate((("a", 60), ("b", 190))):
        pools = covariate_patient_ids(prefix, seed, per_cell)
        pids = [p for pool in pools for p in pool]
        labels = [[1.0 if k % 2 == 0 else 0.0] for pool in pools for k in range(len(pool))]
        rng = np.random.Generator(np.random.Philox(1000 + s))
        images = [np.clip(rng.normal(level, 20, (size, size)), 0, 255).astype(np.uint8) for _ in pids]
        csv = pd.DataFrame({"patientid": pids, "view": "AP" if s == 0 else "PA"})
        out.append(ArrayDataset(f"Source{s + 1}", ["Effusion"], labels, csv, images, 8))
    return tuple(out)


def make_covariate_fixture(root, seed: int = 0, per_cell: int = 20) -> tuple[Path, Path]:
    """On-disk version of :func:`covariate_arrays`, one profile per source."""
    paths = []
    for ds in covariate_arrays(seed, per_cell):
        base = Path(root) / ds.name.lower()
        rows = []
        for i in range(len(ds)):
            fname = f"{i:04d}.png"
            write_png(base / "images" / fname, ds.raw_image(i).pixels)
            rows.append({"file": fname, "pid": ds.csv["patientid"][i], "view": ds.csv["view"][i],
                         "Effusion": str(int(ds.labels[i, 0]))})
        pd.DataFrame(rows).to_csv(base / "meta.csv", index=False)
        paths.append(_dump(base, ds.name.lower(), {
            "name": ds.name,
            "imgpath": "images",
            "csvpath": "meta.csv",
            "image_column": "file",
            "bit_depth": 8,
            "labels": {"mode": "per_column", "columns": {"Effusion": "Effusion"}},
            "patientid_column": "pid",
            "view_column": "view",
        }))
    return tuple(paths)


def patch_arrays(n: int = 12, size: int = 16, patch=(4, 8, 4, 8)):
    """Positives carry a bright square patch at rows ``patch[0]:patch[1]``, cols ``patch[2]:patch[3]``."""
    rng = np.random.Generator(np.random.Philox(7))
    images, labels = [], []
    for i in range(n):
        img = rng.integers(90, 110, size=(size, size)).astype(np.uint8)
        positive = i % 2 == 0
        if positive:
            img[patch[0]:patch[1], patch[2]:patch[3]] = 250
        images.append(img)
        labels.append([1.0 if positive else 0.0])
    return ArrayDataset("Patch_Dataset", ["Nodule"], labels, None, images, 8)


def make_corpus(root) -> dict[str, Path]:
    """Write every fixture under ``root``; returns profile paths by short name."""
    root = Path(root)
    d1, d2 = make_covariate_fixture(root / "covariate")
    return {
        "nih": make_nih_fixture(root),
        "chex": make_chexpert_fixture(root),
        "pc": make_padchest_fixture(root),
        "const255": make_constant_fixture(root),
        "cov1": d1,
        "cov2": d2,
    }
