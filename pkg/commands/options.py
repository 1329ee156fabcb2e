"""commands/options.py — argument helpers shared by the command groups."""

from __future__ import annotations

import argparse
from pathlib import Path

from experiment_config import ExperimentConfig, load_config


def add_config_args(parser: argparse.ArgumentParser, default: str | None = None,
                    aliases: tuple[str, ...] = ()) -> None:
    parser.add_argument("--config", *aliases, dest="config", type=Path,
                        default=Path(default) if default else None,
                        help="experiment config (.json or .yaml)")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="PATH=VALUE",
                        help="override one config field, e.g. translator.tau=0.1 (repeatable)")


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    return load_config(args.config, args.overrides)
