"""commands/system_cmd.py — `version`, `info` and `validate`."""

from __future__ import annotations

import argparse
import sys

import config
from commands.options import add_config_args
from errors import ConfigError
from experiment_config import apply_overrides, config_hash, read_document, validate_data
from feature_extractors import available_extractors, get_extractor_capabilities
from manifest import library_versions
from simulate import SequenceKind


def handle_version(args: argparse.Namespace) -> int:
    print(f"sim2real {config.VERSION}")
    return 0


def handle_info(args: argparse.Namespace) -> int:
    print("sim2real")
    config.print_config_summary()
    print("  Libraries:       " + ", ".join(f"{k} {v}" for k, v in library_versions().items() if k != "sim2real"))
    print("  Sequence kinds:  " + ", ".join(k.value for k in SequenceKind))
    print("  Extractors:")
    for kind in available_extractors():
        caps = get_extractor_capabilities(kind)
        print(f"    {kind:<12} d={caps.dim:<3} {'seeded' if caps.seeded else 'fixed '}  {caps.notes}")
    problems = config.validate()
    for p in problems:
        print(f"  ⚠️ {p}")
    return 0


def handle_validate(args: argparse.Namespace) -> int:
    data = read_document(args.config) if args.config is not None else {}
    cfg, findings = validate_data(apply_overrides(data, args.overrides))
    findings = findings + config.validate()
    if findings:
        for f in findings:
            print(f"error: {f}", file=sys.stderr)
        return ConfigError.exit_code
    print(f"{args.config or '<defaults>'}: valid (0 findings, config hash {config_hash(cfg)[:12]})")
    return 0


def register(subparsers) -> None:
    subparsers.add_parser("version", help="print the version").set_defaults(command="version")
    subparsers.add_parser("info", help="settings, libraries, extractors, sequence kinds").set_defaults(command="info")
    p = subparsers.add_parser("validate", help="validate a config without running anything")
    add_config_args(p, default=config.EXAMPLE_CONFIG)
    p.set_defaults(command="validate")


HANDLERS = {
    "version": handle_version,
    "info": handle_info,
    "validate": handle_validate,
}
