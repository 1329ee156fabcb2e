"""
experiment_config.py — Validated experiment configuration.

One document (JSON or YAML) describes a whole run. Every section is a pydantic
model with extra keys forbidden, so typos surface as findings instead of being
silently ignored. Findings read ``path.to.field: message``.

Overrides use ``--set a.b.c=value``; the value is parsed as JSON and falls back
to the raw string (``--set real_domain.directory=/data/real``).
"""

from __future__ import annotations

import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, ValidationError, model_validator

import config
from errors import ConfigError
from networks import DiscriminatorSpec, GeneratorSpec
from phantom import PopulationSpec, TissueClass
from seeds import derive_seed
from simulate import SequenceKind, SequenceParams, SimulationError, TissueProperties, default_tissue_table
from translate import TranslatorConfig

log = logging.getLogger(__name__)


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


# ── Sections ─────────────────────────────────────────────────────────────────

class PopulationSection(_Section):
    n_subjects: int = Field(8, ge=1)
    id_prefix: str = Field("subj", min_length=1)
    dims: tuple[int, int, int] = (128, 128, 40)
    spacing: tuple[PositiveFloat, PositiveFloat, PositiveFloat] = (1.5, 1.5, 4.0)
    ranges: dict[str, tuple[float, float]] = Field(default_factory=lambda: dict(PopulationSpec().ranges))

    @model_validator(mode="after")
    def _check(self):
        nx, ny, nz = self.dims
        if nx < 16 or ny < 16 or nz < 4:
            raise ValueError(f"dims {list(self.dims)} below minimum (16, 16, 4)")
        problems = self.to_spec().validate()
        if problems:
            raise ValueError("; ".join(problems))
        return self

    def to_spec(self, id_prefix: str | None = None) -> PopulationSpec:
        return PopulationSpec(self.n_subjects, id_prefix or self.id_prefix, dict(self.ranges))


class SequenceSection(_Section):
    kind: SequenceKind = SequenceKind.BSSFP
    tr: PositiveFloat = 3.0
    te: PositiveFloat = 1.5
    flip_deg: float = Field(45.0, gt=0, lt=180)
    noise_sd: float = Field(0.02, ge=0)

    @model_validator(mode="after")
    def _check(self):
        if not self.te < self.tr:
            raise ValueError(f"te ({self.te}) must be < tr ({self.tr})")
        return self

    def to_params(self, seed: int) -> SequenceParams:
        return SequenceParams(self.kind, self.tr, self.te, self.flip_deg, self.noise_sd, seed)


class TissueSection(_Section):
    t1: PositiveFloat
    t2: PositiveFloat
    t2_star: PositiveFloat
    pd: PositiveFloat

    @model_validator(mode="after")
    def _check(self):
        try:
            self.to_properties()
        except SimulationError as exc:
            raise ValueError(str(exc)) from exc
        return self

    def to_properties(self) -> TissueProperties:
        return TissueProperties(self.t1, self.t2, self.t2_star, self.pd)


_TISSUE_NAMES = {t.label: t for t in TissueClass if t is not TissueClass.BACKGROUND}


class SimulationSection(_Section):
    variation_pct: float = Field(0.1, ge=0, le=0.3)
    n_slices: int = Field(4, ge=1)
    tissue_table: dict[str, TissueSection] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _check(self):
        unknown = sorted(set(self.tissue_table) - set(_TISSUE_NAMES))
        if unknown:
            raise ValueError(f"unknown tissue(s) {unknown}; expected some of {sorted(_TISSUE_NAMES)}")
        return self

    def table(self) -> dict[TissueClass, TissueProperties]:
        table = default_tissue_table()
        for name, props in self.tissue_table.items():
            table[_TISSUE_NAMES[name]] = props.to_properties()
        return table


class RealDomainSection(_Section):
    source: Literal["synthetic", "directory"] = "synthetic"
    directory: str | None = None
    n_subjects: int = Field(8, ge=1)
    texture_sd: float = Field(0.08, ge=0)
    correlation_px: PositiveFloat = 1.5
    gradient_strength: float = Field(0.35, ge=0)

    @model_validator(mode="after")
    def _check(self):
        if self.source == "directory" and not self.directory:
            raise ValueError("directory is required when source is 'directory'")
        return self


class PreprocessSection(_Section):
    width: int = Field(128, ge=8)
    height: int = Field(126, ge=8)
    margin: int = Field(8, ge=0)
    real_mode: Literal["center", "bbox"] = "center"
    real_resize: tuple[int, int] | None = None


class GeneratorSection(_Section):
    base_channels: int = Field(32, ge=1)
    n_downsamples: int = Field(2, ge=0)
    n_resblocks: int = Field(4, ge=0)
    nce_layers: tuple[int, ...] = (0, 2, 4)

    @model_validator(mode="after")
    def _check(self):
        problems = self.to_spec().validate()
        if problems:
            raise ValueError("; ".join(problems))
        return self

    def to_spec(self) -> GeneratorSpec:
        return GeneratorSpec(self.base_channels, self.n_downsamples, self.n_resblocks, tuple(self.nce_layers))


class DiscriminatorSection(_Section):
    base_channels: int = Field(32, ge=1)
    n_layers: int = Field(3, ge=1)

    def to_spec(self) -> DiscriminatorSpec:
        return DiscriminatorSpec(self.base_channels, self.n_layers)


class TranslatorSection(_Section):
    tau: float = Field(0.07, gt=0)
    lambda_nce: float = Field(1.0, ge=0)
    lambda_nce_identity: float = Field(1.0, ge=0)
    n_patches: int = Field(64, ge=2)
    lr: PositiveFloat = 2e-4
    beta1: float = Field(0.5, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    iterations: int = Field(2000, ge=0)
    batch_size: int = Field(1, ge=1)
    crop_size: int | None = Field(64, ge=8)
    head_dim: int = Field(128, ge=1)
    log_every: int = Field(50, ge=1)
    max_seconds: PositiveFloat | None = None
    generator: GeneratorSection = Field(default_factory=GeneratorSection)
    discriminator: DiscriminatorSection = Field(default_factory=DiscriminatorSection)

    def to_config(self, seed: int) -> TranslatorConfig:
        data = self.model_dump(exclude={"generator", "discriminator"})
        return TranslatorConfig(seed=seed, **data)


class MetricsSection(_Section):
    extractor: Literal["random_conv", "pixel_stats"] = "random_conv"
    seed: int = Field(0, ge=0)
    hd_percentile: float = Field(100.0, gt=0, le=100)


class ExperimentConfig(_Section):
    name: str = Field("experiment", min_length=1)
    seed: int = Field(0, ge=0, lt=2 ** 63)
    output_root: str = config.OUTPUT_ROOT
    population: PopulationSection = Field(default_factory=PopulationSection)
    sequence: SequenceSection = Field(default_factory=SequenceSection)
    simulation: SimulationSection = Field(default_factory=SimulationSection)
    real_domain: RealDomainSection = Field(default_factory=RealDomainSection)
    preprocess: PreprocessSection = Field(default_factory=PreprocessSection)
    translator: TranslatorSection = Field(default_factory=TranslatorSection)
    metrics: MetricsSection = Field(default_factory=MetricsSection)

    def stage_seed(self, stage: str) -> int:
        return derive_seed(self.seed, stage)

    def to_dict(self) -> dict:
        return self.model_dump(mode="json")


# ── Loading ──────────────────────────────────────────────────────────────────

def _findings(exc: ValidationError) -> list[str]:
    out = []
    for err in exc.errors():
        path = ".".join(str(p) for p in err.get("loc", ())) or "<root>"
        msg = err.get("msg", "invalid").removeprefix("Value error, ")
        out.append(f"{path}: {msg}")
    return out


def read_document(path: str | Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"{path}: config file not found")
    text = path.read_text(encoding="utf-8")
    try:
        if path.suffix.lower() in (".yaml", ".yml"):
            data = yaml.safe_load(text)
        else:
            data = json.loads(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"{path}: not a valid config document: {exc}") from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return data


def parse_override(item: str) -> tuple[list[str], Any]:
    key, sep, raw = item.partition("=")
    if not sep or not key.strip():
        raise ConfigError(f"override {item!r} must look like path.to.field=value")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip().split("."), value


def apply_overrides(data: dict, overrides: list[str]) -> dict:
    """Copy of ``data`` with each ``path=value`` written in; bad paths are findings."""
    out = json.loads(json.dumps(data))
    findings = []
    for item in overrides:
        keys, value = parse_override(item)
        node = out
        for depth, key in enumerate(keys[:-1]):
            child = node.setdefault(key, {})
            if not isinstance(child, dict):
                findings.append(f"{'.'.join(keys[:depth + 1])}: cannot set a field inside a non-object value")
                break
            node = child
        else:
            node[keys[-1]] = value
    if findings:
        raise ConfigError(findings)
    return out


def validate_data(data: dict) -> tuple[ExperimentConfig | None, list[str]]:
    try:
        return ExperimentConfig.model_validate(data), []
    except ValidationError as exc:
        return None, _findings(exc)


def load_config(path: str | Path | None = None, overrides: list[str] | None = None) -> ExperimentConfig:
    data = read_document(path) if path is not None else {}
    data = apply_overrides(data, overrides or [])
    cfg, findings = validate_data(data)
    if findings:
        raise ConfigError(findings)
    log.debug("experiment_config: loaded %s (hash %s)", path or "<defaults>", config_hash(cfg)[:12])
    return cfg


def config_hash(cfg: ExperimentConfig) -> str:
    """sha256 of the canonical JSON dump; where the run is written does not count."""
    data = cfg.to_dict()
    data.pop("output_root", None)
    canonical = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
