"""``cxr-harmon`` command line.

Exit codes: 0 success, 1 usage error, 2 data error. Machine-readable JSON goes
to stdout unless ``--human`` is given. ``CXR_HARMON_LOG`` sets the log level.
"""

from __future__ import annotations

import argparse
import io
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from . import __version__
from .calibration import ScoredSet, apply_opt, auc, op_point
from .composition import filter_views, merge, relabel, subset, unique_patients, where
from .covariate import MODES, CovariateSpec, build_covariate, class_mean_difference
from .dataset import render_summary
from .errors import HarmonError
from .fixtures import make_corpus
from .formats import (
    atomic_write, load_input, read_params, stats_document, write_grid_png, write_json,
    write_manifest, write_params, write_tensor,
)
from .taxonomy import DEFAULT_PATHOLOGIES, Pathology
from .transforms import TransformChain

log = logging.getLogger("cxr_harmon")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _emit(args, doc: dict, human: Optional[str] = None) -> None:
    if getattr(args, "human", False) and human is not None:
        print(human)
    else:
        print(json.dumps(doc, indent=2, default=str))


def _target_list(spec: Optional[str]):
    if spec is None:
        return None
    if spec == "default":
        return list(DEFAULT_PATHOLOGIES)
    return [s for s in (x.strip() for x in spec.split(",")) if s]


def _load(path, relabel_to=None):
    ds = load_input(path)
    if relabel_to is not None:
        ds = relabel(ds, relabel_to)
    return ds


def cmd_stats(args) -> int:
    ds = _load(args.input, _target_list(args.relabel))
    doc = stats_document(ds)
    if args.out:
        write_json(args.out, doc)
        doc["written"] = [str(args.out)]
    _emit(args, doc, render_summary(ds))
    return EXIT_OK


def cmd_manifest(args) -> int:
    ds = _load(args.input, _target_list(args.relabel))
    paths = write_manifest(ds, args.out)
    _emit(args, {"num_samples": len(ds), "written": [str(p) for p in paths]}, render_summary(ds))
    return EXIT_OK


def _read_indices(path) -> list[int]:
    out = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            try:
                out.append(int(line))
            except ValueError:
                raise UsageError(f"{path}: not an integer index: {line!r}") from None
    return out


def cmd_subset(args) -> int:
    ds = _load(args.input, _target_list(args.relabel))
    if args.indices:
        ds = subset(ds, _read_indices(args.indices))
    if args.where:
        ds = subset(ds, where(ds, args.where))
    if args.views is not None:
        ds = filter_views(ds, [v.strip() for v in args.views.split(",") if v.strip()])
    if args.unique_patients:
        ds = unique_patients(ds)
    paths = write_manifest(ds, args.out)
    _emit(args, {"num_samples": len(ds), "written": [str(p) for p in paths]}, render_summary(ds))
    return EXIT_OK


def cmd_merge(args) -> int:
    target = _target_list(args.relabel)
    ds = merge([_load(p, target) for p in args.inputs])
    paths = write_manifest(ds, args.out)
    _emit(args, {"num_samples": len(ds), "written": [str(p) for p in paths]}, render_summary(ds))
    return EXIT_OK


def cmd_preprocess(args) -> int:
    ds = _load(args.input)
    try:
        chain = TransformChain.parse(args.transform or f"crop,resize:{args.res}")
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if chain.augments and args.seed is None and not any(getattr(s, "seed", None) is not None for s in chain.steps):
        raise UsageError("augmenting transforms need --seed")
    indices = args.index if args.index else range(len(ds))
    out = Path(args.out)
    written = []
    for i in indices:
        sample = ds.get_sample(i, chain, seed=args.seed)
        base = out / f"sample_{i:06d}.bin"
        written += [str(p) for p in write_tensor(base, sample.img, {"index": i, "transform": str(chain)})]
    _emit(args, {"num_samples": len(indices), "written": written}, f"wrote {len(indices)} tensors to {out}")
    return EXIT_OK


def _score_frame(path) -> pd.DataFrame:
    frame = pd.read_csv(path, float_precision="round_trip")
    missing = [c for c in ("id", "score") if c not in frame.columns]
    if missing:
        raise HarmonError(f"{path}: missing columns {missing}")
    return frame


def _groups(frame: pd.DataFrame, pathology: Optional[str], known=None):
    if "pathology" in frame.columns:
        for name, part in frame.groupby("pathology", sort=False):
            yield str(Pathology(name)), part
        return
    if pathology is None and known is not None and len(known) == 1:
        pathology = next(iter(known))
    if pathology is None:
        raise UsageError("scores have no pathology column; pass --pathology")
    yield str(Pathology(pathology)), frame


def cmd_calibrate(args) -> int:
    frame = _score_frame(args.scores)
    if "label" not in frame.columns:
        raise HarmonError(f"{args.scores}: missing column 'label'")
    params, report = {}, {}
    for name, part in _groups(frame, args.pathology):
        ss = ScoredSet.from_labels(part["score"].to_numpy(float), part["label"].to_numpy(float))
        params[name] = op_point(ss)
        report[name] = {"opt": params[name], "auc": auc(ss), "n": int(ss.scores.size)}
    write_params(args.out, params)
    _emit(args, {"params": params, "report": report, "written": [str(args.out)]},
          "\n".join(f"{k}: opt={v['opt']:.6f} auc={v['auc']:.4f} n={v['n']}" for k, v in report.items()))
    return EXIT_OK


def cmd_apply(args) -> int:
    frame = _score_frame(args.scores)
    params = read_params(args.params)
    parts = []
    for name, part in _groups(frame, args.pathology, known=params):
        if name not in params:
            raise HarmonError(f"no calibration parameters for {name!r}")
        part = part.copy()
        part["raw_score"] = part["score"]
        part["score"] = apply_opt(part["score"].to_numpy(float), params[name])
        if "pathology" not in part.columns:
            part.insert(1, "pathology", name)
        parts.append(part)
    result = pd.concat(parts).sort_index()
    buf = io.StringIO()
    result.to_csv(buf, index=False, lineterminator="\n", float_format="%.17g")
    atomic_write(args.out, buf.getvalue())
    _emit(args, {"num_rows": len(result), "written": [str(args.out)]}, f"wrote {len(result)} calibrated scores")
    return EXIT_OK


def cmd_covariate(args) -> int:
    if not 0.0 < args.ratio < 1.0:
        raise UsageError(f"ratio must be in (0,1), got {args.ratio}")
    fractions = tuple(float(x) for x in args.fractions.split(","))
    if len(fractions) != 3 or abs(sum(fractions) - 1) > 1e-9:
        raise UsageError("--fractions needs three numbers summing to 1")
    d1, d2 = load_input(args.d1), load_input(args.d2)
    spec = CovariateSpec(d1, d2, args.target, args.d2_target or args.target, args.mode, args.ratio,
                         args.seed, fractions)
    split = build_covariate(spec)
    out = Path(args.out)
    provenance = {
        "kind": "covariate",
        "d1": str(args.d1), "d2": str(args.d2),
        "d1_target": args.target, "d2_target": args.d2_target or args.target,
        "mode": args.mode, "ratio": args.ratio, "effective_ratio": spec.effective_ratio,
        "seed": args.seed, "pool_fractions": list(fractions), "n": split.n, "num_samples": len(split),
    }
    written = [str(p) for p in write_manifest(split, out / "split.csv", {"covariate": provenance})]
    written.append(str(write_json(out / "provenance.json", provenance)))
    _emit(args, {**provenance, "written": written}, render_summary(split))
    return EXIT_OK


def cmd_classdiff(args) -> int:
    ds = _load(args.input)
    grid = class_mean_difference(ds, args.target, args.res)
    written = [str(p) for p in write_grid_png(args.out, grid, {"target": args.target, "source": str(args.input)})]
    _emit(args, {"shape": list(grid.shape), "min": float(grid.min()), "max": float(grid.max()),
                 "written": written}, f"class mean difference {grid.shape} written to {args.out}")
    return EXIT_OK


def cmd_make_fixtures(args) -> int:
    paths = {k: str(v) for k, v in make_corpus(args.dir).items()}
    _emit(args, {"profiles": paths}, "\n".join(f"{k}: {v}" for k, v in paths.items()))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    out_fmt = _Parser(add_help=False)
    g = out_fmt.add_mutually_exclusive_group()
    g.add_argument("--json", dest="human", action="store_false", default=False, help="JSON output (default)")
    g.add_argument("--human", action="store_true", help="human-readable output")

    relab = _Parser(add_help=False)
    relab.add_argument("--relabel", metavar="LIST", help="'default' or comma-separated pathologies")

    p = _Parser(prog="cxr-harmon", description="Harmonize multi-source chest X-ray datasets.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    s = sub.add_parser("stats", parents=[out_fmt, relab], help="label counts for a profile or manifest")
    s.add_argument("input")
    s.add_argument("--out", help="also write the stats JSON here")
    s.set_defaults(func=cmd_stats)

    s = sub.add_parser("manifest", parents=[out_fmt, relab], help="export a dataset manifest")
    s.add_argument("input")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_manifest)

    s = sub.add_parser("subset", parents=[out_fmt, relab], help="select rows into a new manifest")
    s.add_argument("input")
    s.add_argument("--indices", help="file with one index per line")
    s.add_argument("--where", help="predicate 'column op value'")
    s.add_argument("--views", help="comma-separated canonical views to keep")
    s.add_argument("--unique-patients", action="store_true")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_subset)

    s = sub.add_parser("merge", parents=[out_fmt, relab], help="concatenate datasets into one manifest")
    s.add_argument("inputs", nargs="+")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_merge)

    s = sub.add_parser("preprocess", parents=[out_fmt], help="write preprocessed float32 tensors")
    s.add_argument("input")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--index", type=int, action="append", help="sample index (repeatable; default all)")
    s.add_argument("--res", type=int, default=224)
    s.add_argument("--transform", help="e.g. 'crop,resize:224,augment:seed=7'")
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_preprocess)

    s = sub.add_parser("calibrate", parents=[out_fmt], help="operating points from scored labels")
    s.add_argument("--scores", required=True, help="CSV with id, score, label[, pathology]")
    s.add_argument("--pathology")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_calibrate)

    s = sub.add_parser("apply", parents=[out_fmt], help="calibrate scores with saved operating points")
    s.add_argument("--scores", required=True, help="CSV with id, score[, pathology]")
    s.add_argument("--params", required=True)
    s.add_argument("--pathology")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_apply)

    s = sub.add_parser("covariate", parents=[out_fmt], help="build a covariate-shift split")
    s.add_argument("--d1", required=True)
    s.add_argument("--d2", required=True)
    s.add_argument("--target", required=True)
    s.add_argument("--d2-target")
    s.add_argument("--ratio", type=float, required=True)
    s.add_argument("--mode", choices=MODES, default="train")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--fractions", default="0.7,0.1,0.2")
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_covariate)

    s = sub.add_parser("classdiff", parents=[out_fmt], help="class-mean difference image")
    s.add_argument("input")
    s.add_argument("--target", required=True)
    s.add_argument("--res", type=int, default=224)
    s.add_argument("--out", required=True, help="16-bit PNG path")
    s.set_defaults(func=cmd_classdiff)

    s = sub.add_parser("make-fixtures", parents=[out_fmt], help="write the synthetic corpus")
    s.add_argument("dir")
    s.set_defaults(func=cmd_make_fixtures)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(level=os.environ.get("CXR_HARMON_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"cxr-harmon: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (HarmonError, FileNotFoundError, KeyError, ValueError) as exc:
        print(f"cxr-harmon: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
