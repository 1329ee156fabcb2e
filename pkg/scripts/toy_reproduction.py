#!/usr/bin/env python3
"""Toy reproduction: does translation reduce FID(·, real) across master seeds?

Runs the full pipeline on the toy config once per master seed, reads each
reports/fid.csv, and emits the per-seed results as JSON + a human-readable
markdown report. The run counts as reproduced when FID(translated, real) <
FID(sim, real) in at least --required of the seeds.

Usage:
    python3 scripts/toy_reproduction.py \\
        --config configs/toy.json \\
        --seeds 0 1 2 3 4 \\
        --out-dir experiments/toy-seeds \\
        --out-json toy.json \\
        --out-md toy.md
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import asdict, dataclass
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

import config  # noqa: E402

config.apply_thread_env()

from errors import Sim2RealError  # noqa: E402
from experiment_config import load_config  # noqa: E402
from pipeline import content_summary, fid_summary, run_pipeline  # noqa: E402

log = logging.getLogger("toy_reproduction")


@dataclass
class SeedResult:
    seed: int
    status: str  # "reduced" | "not_reduced" | "error"
    fid_sim_real: float | None = None
    fid_translated_real: float | None = None
    content_preserved: bool | None = None
    seconds: float = 0.0
    experiment_dir: str = ""
    error: str | None = None


def run_seed(config_path: Path, seed: int, out_dir: Path, overrides: list[str]) -> SeedResult:
    result = SeedResult(seed=seed, status="error")
    started = time.monotonic()
    try:
        cfg = load_config(config_path, [*overrides, f"seed={seed}", f"name=seed{seed}"])
        root = run_pipeline(cfg, out_dir / f"seed{seed}")
        fid = fid_summary(root)
        result.fid_sim_real = fid["sim_vs_real"]
        result.fid_translated_real = fid["translated_vs_real"]
        result.content_preserved = content_summary(root)["preserved"]
        result.status = "reduced" if result.fid_translated_real < result.fid_sim_real else "not_reduced"
        result.experiment_dir = str(root)
    except Sim2RealError as exc:
        result.error = str(exc)
    result.seconds = time.monotonic() - started
    return result


def render_markdown(results: list[SeedResult], required: int) -> str:
    reduced = [r for r in results if r.status == "reduced"]
    errored = [r for r in results if r.status == "error"]

    lines: list[str] = []
    lines.append("# Toy FID-reduction report")
    lines.append("")
    verdict = "reproduced" if len(reduced) >= required else "NOT reproduced"
    lines.append(
        f"**Summary:** {len(reduced)}/{len(results)} seeds reduced FID"
        + (f" · {len(errored)} error" if errored else "")
        + f" · need {required} → {verdict}"
    )
    lines.append("")
    lines.append("| seed | FID(sim, real) | FID(translated, real) | result | content kept | time |")
    lines.append("|---:|---:|---:|---|---|---:|")
    for r in results:
        if r.status == "error":
            lines.append(f"| {r.seed} | | | error: {r.error} | | {r.seconds:.0f}s |")
            continue
        kept = "yes" if r.content_preserved else "no"
        lines.append(
            f"| {r.seed} | {r.fid_sim_real:.4f} | {r.fid_translated_real:.4f} | {r.status} | {kept} | {r.seconds:.0f}s |"
        )
    lines.append("")
    lines.append("Absolute values depend on the feature extractor; only the ordering is meaningful.")
    lines.append("")
    return "\n".join(lines)


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--config", type=Path, default=Path(__file__).resolve().parent.parent / "configs" / "toy.json")
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    ap.add_argument("--required", type=int, default=4, help="seeds that must reduce FID")
    ap.add_argument("--out-dir", type=Path, default=Path(config.OUTPUT_ROOT) / "toy-seeds")
    ap.add_argument("--set", dest="overrides", action="append", default=[], metavar="PATH=VALUE")
    ap.add_argument("--out-json", type=Path)
    ap.add_argument("--out-md", type=Path)
    args = ap.parse_args()

    logging.basicConfig(level=getattr(logging, config.LOG_LEVEL, logging.INFO), format=config.LOG_FORMAT)
    if not args.config.exists():
        print(f"error: --config not found: {args.config}", file=sys.stderr)
        return 2

    results = [run_seed(args.config, s, args.out_dir, args.overrides) for s in args.seeds]
    reduced = sum(1 for r in results if r.status == "reduced")
    payload = {
        "config": str(args.config),
        "required": args.required,
        "totals": {
            "reduced": reduced,
            "not_reduced": sum(1 for r in results if r.status == "not_reduced"),
            "error": sum(1 for r in results if r.status == "error"),
            "total": len(results),
        },
        "results": [asdict(r) for r in results],
    }

    if args.out_json:
        args.out_json.write_text(json.dumps(payload, indent=2))
    else:
        print(json.dumps(payload, indent=2))

    if args.out_md:
        args.out_md.write_text(render_markdown(results, args.required))

    return 0 if reduced >= args.required else 1


if __name__ == "__main__":
    sys.exit(main())
