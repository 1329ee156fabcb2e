"""commands/preprocess_cmd.py — `preprocess`: crop / resize / normalise a directory of images.

Sim mode crops each image to its heart bounding box, read from
<labels>/<name>.lbl, or from the sibling <in>/<name>.lbl when --labels is
not given.
"""

from __future__ import annotations

import argparse
from pathlib import Path

from commands.options import add_config_args, config_from_args
from phantom import load_label_slice, save_label_slice
from preprocess import preprocess_labels_sim, preprocess_real, preprocess_sim
from simulate import load_image_dir, save_image


def handle_preprocess(args: argparse.Namespace) -> int:
    cfg = config_from_args(args)
    pp = cfg.preprocess
    width = args.width or pp.width
    height = args.height or pp.height
    margin = pp.margin if args.margin is None else args.margin
    out = Path(args.out)
    images = load_image_dir(args.input)
    label_dir = Path(args.labels) if args.labels is not None else Path(args.input)

    if args.mode == "sim":
        missing = [name for name, _ in images if not (label_dir / f"{name}.lbl").is_file()]
        if missing:
            raise FileNotFoundError(
                f"--mode sim: no label slice {label_dir / (missing[0] + '.lbl')} "
                f"({len(missing)} missing); pass --labels or keep .lbl files next to the images"
            )

    for name, img in images:
        if args.mode == "sim":
            labels = load_label_slice(label_dir / f"{name}.lbl")
            save_image(preprocess_sim(img, labels, margin, width, height), out / f"{name}.img")
            save_label_slice(preprocess_labels_sim(labels, margin, width, height), out / "labels" / f"{name}.lbl")
        else:
            save_image(preprocess_real(img, width, height, pp.real_resize), out / f"{name}.img")
    print(f"{len(images)} images preprocessed ({args.mode}, {width}x{height}) → {out}")
    return 0


def register(subparsers) -> None:
    p = subparsers.add_parser("preprocess", help="crop, resize and normalise images to the training size")
    add_config_args(p)
    p.add_argument("--in", dest="input", required=True, type=Path, help="directory of .img files")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--mode", choices=("sim", "real"), default="real")
    p.add_argument("--labels", type=Path, default=None, help="matching .lbl slices (sim mode; default: --in)")
    p.add_argument("--width", type=int, default=None)
    p.add_argument("--height", type=int, default=None)
    p.add_argument("--margin", type=int, default=None, help="pixels around the heart bounding box (sim mode)")
    p.set_defaults(command="preprocess")


HANDLERS = {
    "preprocess": handle_preprocess,
}
