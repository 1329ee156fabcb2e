"""
seeds.py — Stable seed splitting.

A derived seed is the first 8 bytes (little-endian) of
    sha256("<master>|<stage>|<item>|<item>...")
so any implementation with the same hash spec replays the same streams,
independent of execution order or parallelism.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(master: int, stage: str, *items: object) -> int:
    key = "|".join([str(int(master)), stage, *(str(i) for i in items)])
    return int.from_bytes(hashlib.sha256(key.encode("utf-8")).digest()[:8], "little")


def rng_for(master: int, stage: str, *items: object) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master, stage, *items))
