#!/usr/bin/env python3
"""
cli.py — Entry point for the sim2real pipeline.

    python3 cli.py run --config configs/toy.json
    python3 cli.py validate --config configs/example.json --set translator.tau=0.1
    python3 cli.py evaluate fid --sim a/ --real b/ --report fid.csv

Exit codes: 0 success, 1 validation, 2 runtime, 3 numeric error.
"""

from __future__ import annotations

import argparse
import logging
import sys

import config

# Thread pools are sized when numpy loads, so this has to run first.
config.apply_thread_env()

from commands import COMMAND_HANDLERS, GROUPS  # noqa: E402
from errors import ConfigError, Sim2RealError  # noqa: E402

log = logging.getLogger("cli")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sim2real", description=__doc__.split("\n\n")[0].split("—")[-1].strip())
    ap.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = ap.add_subparsers(dest="group", required=True)
    for group in GROUPS:
        group.register(sub)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else getattr(logging, config.LOG_LEVEL, logging.INFO),
        format=config.LOG_FORMAT,
    )
    handler = COMMAND_HANDLERS[args.command]
    try:
        return handler(args)
    except ConfigError as exc:
        for finding in exc.findings:
            print(f"error: {finding}", file=sys.stderr)
        return exc.exit_code
    except Sim2RealError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, ValueError) as exc:
        log.debug("cli: %s failed", args.command, exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
