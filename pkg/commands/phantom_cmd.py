"""commands/phantom_cmd.py — `phantom generate`: label volumes, slices and volumes.csv."""

from __future__ import annotations

import argparse
import logging
from pathlib import Path

from commands.options import add_config_args, config_from_args
from phantom import Phase, load_label_volume, sample_population, volume_statistics, write_volume_csv
from pipeline import render_subjects

log = logging.getLogger(__name__)


def handle_generate(args: argparse.Namespace) -> int:
    cfg = config_from_args(args)
    out = Path(args.out)
    specs = sample_population(cfg.population.to_spec(), cfg.stage_seed("phantom"))
    n = render_subjects(specs, cfg, out, out / "slices")
    pairs = [
        (load_label_volume(out / f"{s.subject_id}_{Phase.ED.value}.vol"),
         load_label_volume(out / f"{s.subject_id}_{Phase.ES.value}.vol"))
        for s in specs
    ]
    records = volume_statistics(pairs)
    write_volume_csv(records, out / "volumes.csv")
    print(f"{len(specs)} subjects ({Phase.ED.value}/{Phase.ES.value}), {n} slices → {out}")
    for r in records:
        print(f"  {r.subject_id}: EDV {r.edv_ml:.1f} mL  ESV {r.esv_ml:.1f} mL  EF {r.ef:.2f}")
    return 0


def register(subparsers) -> None:
    group = subparsers.add_parser("phantom", help="virtual-subject label volumes")
    sub = group.add_subparsers(dest="action", required=True)
    gen = sub.add_parser("generate", help="sample a population and write .vol/.lbl files")
    add_config_args(gen, aliases=("--spec",))
    gen.add_argument("--out", required=True, type=Path)
    gen.set_defaults(command="phantom.generate")


HANDLERS = {
    "phantom.generate": handle_generate,
}
