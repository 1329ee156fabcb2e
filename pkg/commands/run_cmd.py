"""commands/run_cmd.py — `run`: the whole experiment in one directory."""

from __future__ import annotations

import argparse
from pathlib import Path

import manifest as manifest_mod
from commands.options import add_config_args, config_from_args
from pipeline import fid_summary, run_pipeline


def handle_run(args: argparse.Namespace) -> int:
    cfg = config_from_args(args)
    root = run_pipeline(cfg, args.out)
    print(manifest_mod.format_manifest(manifest_mod.load_manifest(root) or {}))
    for comparison, value in fid_summary(root).items():
        print(f"FID {comparison}: {value:.6f}")
    print(f"→ {root}")
    return 0


def register(subparsers) -> None:
    p = subparsers.add_parser("run", help="run (or resume) the full pipeline")
    add_config_args(p)
    p.add_argument("--out", type=Path, default=None, help="experiment directory (default: <output_root>/<name>)")
    p.set_defaults(command="run")


HANDLERS = {
    "run": handle_run,
}
