"""commands/evaluate_cmd.py — `evaluate fid` and `evaluate seg`.

Extractor, extractor seed and Hausdorff percentile default to the config's
metrics section; the flags override it.
"""

from __future__ import annotations

import argparse
import math
from pathlib import Path

from commands.options import add_config_args, config_from_args
from feature_extractors import available_extractors, create_extractor
from metrics import evaluate_realism, evaluate_segmentation, write_fid_csv, write_seg_csv


def _pick(flag, fallback):
    return fallback if flag is None else flag


def handle_fid(args: argparse.Namespace) -> int:
    metrics = config_from_args(args).metrics
    extractor = create_extractor(_pick(args.extractor, metrics.extractor), _pick(args.seed, metrics.seed))
    rows = evaluate_realism(args.sim, args.real, args.translated, extractor)
    write_fid_csv(rows, args.report)
    for r in rows:
        print(f"{r.comparison:<20} {r.fid:>12.6f}  (n={r.n_a}/{r.n_b}, {r.extractor})")
    return 0


def handle_seg(args: argparse.Namespace) -> int:
    percentile = _pick(args.percentile, config_from_args(args).metrics.hd_percentile)
    rows = evaluate_segmentation(args.pred, args.gt, percentile)
    write_seg_csv(rows, args.report)
    print(f"Hausdorff percentile {percentile:g}")
    for r in rows:
        if r.case == "mean":
            hd = "n/a" if math.isnan(r.hausdorff_mm) else f"{r.hausdorff_mm:.2f} mm"
            print(f"{r.tissue:<12} Dice {r.dice:.4f}  HD {hd}")
    return 0


def register(subparsers) -> None:
    group = subparsers.add_parser("evaluate", help="realism (FID) and segmentation metrics")
    sub = group.add_subparsers(dest="action", required=True)

    fid = sub.add_parser("fid", help="Fréchet distance between image sets")
    add_config_args(fid)
    fid.add_argument("--sim", required=True, type=Path)
    fid.add_argument("--real", required=True, type=Path)
    fid.add_argument("--translated", type=Path, default=None)
    fid.add_argument("--extractor", choices=available_extractors(), default=None)
    fid.add_argument("--seed", type=int, default=None)
    fid.add_argument("--report", required=True, type=Path)
    fid.set_defaults(command="evaluate.fid")

    seg = sub.add_parser("seg", help="Dice and Hausdorff between label slice directories")
    add_config_args(seg)
    seg.add_argument("--pred", required=True, type=Path)
    seg.add_argument("--gt", required=True, type=Path)
    seg.add_argument("--percentile", type=float, default=None,
                     help="Hausdorff percentile, 95 for HD95 (default: metrics.hd_percentile)")
    seg.add_argument("--report", required=True, type=Path)
    seg.set_defaults(command="evaluate.seg")


HANDLERS = {
    "evaluate.fid": handle_fid,
    "evaluate.seg": handle_seg,
}
