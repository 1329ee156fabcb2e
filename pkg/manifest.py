"""
manifest.py — structured per-experiment provenance.

A manifest is a small JSON artifact at the root of an experiment directory
recording what produced it: config hash, the validated config itself, library
versions, thread count, per-stage seeds and which stages have completed.
"""

from __future__ import annotations

import json
import platform
import time
from pathlib import Path
from typing import Optional

import numpy as np
import pydantic
import scipy
import yaml

import artifacts
import config

MANIFEST_FILE = "manifest.json"


def manifest_path(experiment_dir: str | Path) -> Path:
    return Path(experiment_dir) / MANIFEST_FILE


def load_manifest(experiment_dir: str | Path) -> Optional[dict]:
    path = manifest_path(experiment_dir)
    if not path.exists():
        return None
    try:
        return json.loads(path.read_text())
    except (OSError, json.JSONDecodeError, ValueError):
        return None


def save_manifest(experiment_dir: str | Path, manifest: dict) -> Path:
    payload = {**manifest, "updated_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())}
    return artifacts.atomic_write_text(manifest_path(experiment_dir), json.dumps(payload, indent=2, sort_keys=True) + "\n")


def library_versions() -> dict[str, str]:
    return {
        "sim2real": config.VERSION,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pydantic": pydantic.VERSION,
        "pyyaml": yaml.__version__,
    }


def build_manifest(
    *,
    name: str,
    config_hash: str,
    experiment_config: dict,
    seeds: dict[str, int],
) -> dict:
    return {
        "name": name,
        "config_hash": config_hash,
        "config": experiment_config,
        "versions": library_versions(),
        "threads": config.THREADS,
        "precision": config.PRECISION,
        "seeds": {k: str(v) for k, v in seeds.items()},
        "stages": [],
    }


def mark_stage(manifest: dict, stage: str, **details) -> dict:
    stages = [s for s in manifest.get("stages", []) if s.get("name") != stage]
    stages.append({"name": stage, **details})
    return {**manifest, "stages": stages}


def completed_stages(manifest: dict | None) -> set[str]:
    return {s["name"] for s in (manifest or {}).get("stages", [])}


def format_manifest(manifest: dict) -> str:
    parts = [
        "EXPERIMENT",
        f"Name: {manifest.get('name', 'unknown')}",
        f"Config hash: {manifest.get('config_hash', '')[:16]}",
        f"Threads: {manifest.get('threads')}  Precision: {manifest.get('precision')}",
    ]

    versions = manifest.get("versions") or {}
    if versions:
        parts.append("Versions: " + ", ".join(f"{k} {v}" for k, v in sorted(versions.items())))

    stages = manifest.get("stages") or []
    if stages:
        parts.append("Stages:")
        for stage in stages:
            extras = ", ".join(f"{k}={v}" for k, v in stage.items() if k != "name")
            parts.append(f"- {stage['name']}" + (f": {extras}" if extras else ""))

    return "\n".join(parts)
