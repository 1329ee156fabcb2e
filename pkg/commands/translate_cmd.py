"""commands/translate_cmd.py — `translate train` and `translate apply`."""

from __future__ import annotations

import argparse
from pathlib import Path

from commands.options import add_config_args, config_from_args
from simulate import load_image_dir, save_image
from translate import load_model, save_model, train_cut, translate_batch, write_loss_log


def handle_train(args: argparse.Namespace) -> int:
    cfg = config_from_args(args)
    tr = cfg.translator
    sim = [img for _, img in load_image_dir(args.sim)]
    real = [img for _, img in load_image_dir(args.real)]
    out = Path(args.out)
    model, records = train_cut(
        sim, real,
        tr.generator.to_spec(), tr.discriminator.to_spec(), tr.to_config(cfg.stage_seed("translate")),
        checkpoint_path=out.with_name(out.stem + ".last_good" + out.suffix),
    )
    save_model(model, out)
    losses = args.losses or out.with_suffix(".losses.csv")
    write_loss_log(records, losses)
    print(f"model {model.model_id}: {model.iterations} iterations → {out} (losses: {losses})")
    return 0


def handle_apply(args: argparse.Namespace) -> int:
    model = load_model(args.ckpt)
    named = load_image_dir(args.input)
    out = Path(args.out)
    for (name, _), img in zip(named, translate_batch(model, [img for _, img in named])):
        save_image(img, out / f"{name}.img")
    print(f"{len(named)} images translated with model {model.model_id} → {out}")
    return 0


def register(subparsers) -> None:
    group = subparsers.add_parser("translate", help="train or apply the sim2real translator")
    sub = group.add_subparsers(dest="action", required=True)

    train = sub.add_parser("train", help="train on preprocessed sim and real images")
    add_config_args(train)
    train.add_argument("--sim", required=True, type=Path)
    train.add_argument("--real", required=True, type=Path)
    train.add_argument("--out", required=True, type=Path, help="checkpoint path")
    train.add_argument("--losses", type=Path, default=None, help="loss CSV (default: next to the checkpoint)")
    train.set_defaults(command="translate.train")

    apply = sub.add_parser("apply", help="translate a directory of images")
    apply.add_argument("--ckpt", required=True, type=Path)
    apply.add_argument("--in", dest="input", required=True, type=Path)
    apply.add_argument("--out", required=True, type=Path)
    apply.set_defaults(command="translate.apply")


HANDLERS = {
    "translate.train": handle_train,
    "translate.apply": handle_apply,
}
