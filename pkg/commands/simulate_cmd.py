"""commands/simulate_cmd.py — `simulate`: label slices → MR images (+ optional texture, PGM previews).

--subjects takes either a directory of .lbl slices or a subject spec file
(an experiment config whose population section is sampled and rendered
into <out>/labels first). Each image is written next to a copy of its label
slice so `preprocess --mode sim` finds the labels without --labels.
"""

from __future__ import annotations

import argparse
import logging
import shutil
from pathlib import Path

from commands.options import add_config_args, config_from_args
from experiment_config import load_config
from phantom import sample_population
from pipeline import render_subjects, simulate_directory
from simulate import export_pgm, load_image_dir

log = logging.getLogger(__name__)


def _label_dir(subjects: Path, out: Path) -> Path:
    if subjects.is_dir():
        return subjects
    if not subjects.is_file():
        raise FileNotFoundError(f"subjects not found: {subjects}")
    spec_cfg = load_config(subjects)
    specs = sample_population(spec_cfg.population.to_spec(), spec_cfg.stage_seed("phantom"))
    slice_dir = out / "labels"
    n = render_subjects(specs, spec_cfg, None, slice_dir)
    log.info("simulate: rendered %d label slices for %d subjects from %s", n, len(specs), subjects)
    return slice_dir


def handle_simulate(args: argparse.Namespace) -> int:
    cfg = config_from_args(args)
    out = Path(args.out)
    labels = _label_dir(Path(args.labels), out)
    seed = cfg.stage_seed("real.simulate" if args.texture else "simulate")
    texture_seed = cfg.stage_seed("real.texture") if args.texture else None
    n = simulate_directory(labels, out, cfg, seed, texture_seed)
    for path in sorted(labels.glob("*.lbl")):
        shutil.copyfile(path, out / path.name)
    if args.pgm:
        for name, img in load_image_dir(out):
            export_pgm(img, out / "pgm" / f"{name}.pgm")
    print(f"{n} images ({cfg.sequence.kind.value}{', textured' if args.texture else ''}) → {out}")
    return 0


def register(subparsers) -> None:
    p = subparsers.add_parser("simulate", help="simulate MR images from .lbl label slices")
    add_config_args(p, aliases=("--seq",))
    p.add_argument("--subjects", "--labels", dest="labels", required=True, type=Path,
                   help="directory of .lbl slices, or a subject spec file to render first")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--texture", action="store_true", help="apply the procedural real-domain texture")
    p.add_argument("--pgm", action="store_true", help="also export 16-bit PGM previews")
    p.set_defaults(command="simulate")


HANDLERS = {
    "simulate": handle_simulate,
}
