"""
artifacts.py — On-disk codec shared by label volumes, label slices and images.

File layout:
    <UTF-8 YAML mapping: schema, kind, dims, ...>
    --- payload ---
    <raw bytes>

The header is a plain key-value document so files stay greppable; the payload
is whatever the kind defines (uint8 labels, float32 LE pixels).
"""

from __future__ import annotations

import os
import tempfile
from pathlib import Path

import yaml

from errors import Sim2RealError

SCHEMA_VERSION = 1
SEPARATOR = b"\n--- payload ---\n"


class ArtifactFormatError(Sim2RealError, ValueError):
    pass


class MalformedHeaderError(ArtifactFormatError):
    pass


class PayloadMismatchError(ArtifactFormatError):
    pass


def atomic_write_bytes(path: str | Path, data: bytes) -> Path:
    """Write via a sibling temp file and rename, so readers never see a torn file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def atomic_write_text(path: str | Path, text: str) -> Path:
    return atomic_write_bytes(path, text.encode("utf-8"))


def encode(header: dict, payload: bytes) -> bytes:
    text = yaml.safe_dump(
        {"schema": SCHEMA_VERSION, **header},
        sort_keys=True,
        default_flow_style=None,
        allow_unicode=True,
    )
    return text.rstrip("\n").encode("utf-8") + SEPARATOR + payload


def decode(data: bytes, *, kind: str) -> tuple[dict, bytes]:
    idx = data.find(SEPARATOR)
    if idx < 0:
        raise MalformedHeaderError("missing payload separator")
    try:
        header = yaml.safe_load(data[:idx].decode("utf-8"))
    except (UnicodeDecodeError, yaml.YAMLError) as exc:
        raise MalformedHeaderError(f"header is not valid YAML: {exc}") from exc
    if not isinstance(header, dict):
        raise MalformedHeaderError("header must be a key-value mapping")
    if header.get("schema") != SCHEMA_VERSION:
        raise MalformedHeaderError(f"unsupported schema version: {header.get('schema')!r}")
    if header.get("kind") != kind:
        raise MalformedHeaderError(f"expected kind {kind!r}, found {header.get('kind')!r}")
    return header, data[idx + len(SEPARATOR):]


def read(path: str | Path, *, kind: str) -> tuple[dict, bytes]:
    return decode(Path(path).read_bytes(), kind=kind)


def write(path: str | Path, header: dict, payload: bytes) -> Path:
    return atomic_write_bytes(path, encode(header, payload))


def header_field(header: dict, key: str, length: int, cast=float) -> tuple:
    """Fetch a fixed-length numeric tuple from a header or raise MalformedHeaderError."""
    value = header.get(key)
    if not isinstance(value, (list, tuple)) or len(value) != length:
        raise MalformedHeaderError(f"'{key}' must be a list of {length} numbers")
    try:
        return tuple(cast(v) for v in value)
    except (TypeError, ValueError) as exc:
        raise MalformedHeaderError(f"'{key}' has a non-numeric entry") from exc
