"""Experiment configuration: YAML parsing, hypothesis-aware validation.

Validation collects every violation instead of stopping at the first, and
names the mathematical hypothesis a bad value breaks (for example the
3D growth regularity requirement s > 7/2).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field as dataclass_field, asdict

import yaml


class ConfigError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.errors))


@dataclass
class TimeSection:
    t_end: float = 50.0
    burn_in_fraction: float = 0.5
    sample_every_steps: int = 10
    dt: float | None = None
    cfl: float = 0.5
    h_max: float = 0.05


@dataclass
class GrowthSection:
    t_end: float = 64.0
    grid_m: int = 128
    samples: int = 16
    sigma: float = 2.0
    s: float | None = None  # 3D regularity, must exceed 7/2
    cfl: float = 0.5


@dataclass
class BourgainSection:
    horizons: list = dataclass_field(default_factory=lambda: [2.0, 4.0])
    lambda_quantiles: list = dataclass_field(default_factory=lambda: [0.5, 0.75, 0.9])
    sigma: float = 2.0
    doubling_samples: int = 4
    doubling_horizon: float = 20.0


@dataclass
class ExperimentConfig:
    dimension: int = 2
    grid_m: int = 64
    galerkin_n: int | None = None
    delta: float = 0.5
    nu: list = dataclass_field(default_factory=lambda: [1e-2])
    spectrum: dict = dataclass_field(default_factory=lambda: {"kind": "annulus", "k": 4, "alpha": 1.0})
    gamma: float | None = None
    sigma: list = dataclass_field(default_factory=lambda: [2.0])
    seed: int = 2024
    batches: int = 20
    snapshots: int = 0
    linear_only: bool = False
    out_dir: str | None = None
    time: TimeSection = dataclass_field(default_factory=TimeSection)
    growth: GrowthSection = dataclass_field(default_factory=GrowthSection)
    bourgain: BourgainSection = dataclass_field(default_factory=BourgainSection)

    @property
    def s(self) -> float:
        """2D solution regularity 2 + delta."""
        return 2.0 + self.delta


_SECTIONS = {"time": TimeSection, "growth": GrowthSection, "bourgain": BourgainSection}


def _build(data: dict, errors: list) -> ExperimentConfig:
    cfg = ExperimentConfig()
    known = set(ExperimentConfig.__dataclass_fields__)
    for key, value in data.items():
        if key not in known:
            errors.append(f"unknown key {key!r}")
            continue
        if key in _SECTIONS:
            if not isinstance(value, dict):
                errors.append(f"section {key!r} must be a mapping")
                continue
            section = _SECTIONS[key]()
            for k2, v2 in value.items():
                if k2 not in section.__dataclass_fields__:
                    errors.append(f"unknown key {key}.{k2!r}")
                else:
                    setattr(section, k2, v2)
            setattr(cfg, key, section)
        else:
            setattr(cfg, key, value)
    return cfg


def _spectrum_support_radius(cfg: ExperimentConfig) -> float | None:
    """Essential support radius implied by the spectrum parameters."""
    kind = cfg.spectrum.get("kind")
    if kind == "annulus":
        return 2.0 * float(cfg.spectrum.get("k", 0))
    if kind == "shell":
        return float(cfg.spectrum.get("radius", 1))
    return None  # exponential / power-law decay: grid-truncated by design


def validate(cfg: ExperimentConfig) -> list:
    errors = []
    if cfg.dimension not in (2, 3):
        errors.append(f"dimension must be 2 or 3, got {cfg.dimension}")
    if cfg.grid_m < 8 or cfg.grid_m % 2:
        errors.append(f"grid_m must be even and >= 8, got {cfg.grid_m}")
    if cfg.delta <= 0:
        errors.append(f"hypothesis delta > 0 violated: delta = {cfg.delta}")
    if cfg.dimension == 3 and cfg.galerkin_n is None:
        errors.append("3D runs need a Galerkin radius galerkin_n")
    dealias = (cfg.grid_m - 1) // 3
    if cfg.galerkin_n is not None and cfg.galerkin_n > dealias:
        errors.append(
            f"galerkin_n = {cfg.galerkin_n} exceeds the dealias radius {dealias} of grid_m = {cfg.grid_m}"
        )
    if not cfg.nu:
        errors.append("nu list must not be empty")
    elif any(v <= 0 for v in cfg.nu):
        errors.append("all viscosities must be positive")
    elif list(cfg.nu) != sorted(cfg.nu, reverse=True):
        errors.append("nu list must be descending (vanishing-viscosity order)")
    if not isinstance(cfg.spectrum, dict) or "kind" not in cfg.spectrum:
        errors.append("spectrum must be a mapping with a 'kind'")
    else:
        support = _spectrum_support_radius(cfg)
        if support is not None and 3 * support > cfg.grid_m:
            errors.append(
                f"dealias headroom violated: grid_m = {cfg.grid_m} < 3 * spectrum support {support:g}"
            )
    if cfg.gamma is not None and cfg.gamma <= 0:
        errors.append("gamma must be positive when given")
    for s in cfg.sigma:
        if not (1.0 < s <= 2.0 + cfg.delta):
            errors.append(
                f"tail exponent sigma = {s} outside the admissible range (1, 2+delta]"
            )
    if cfg.batches < 2:
        errors.append("batches must be >= 2")
    if cfg.time.t_end <= 0:
        errors.append("time.t_end must be positive")
    if not (0.0 <= cfg.time.burn_in_fraction < 1.0):
        errors.append("time.burn_in_fraction must lie in [0, 1)")
    if cfg.time.dt is not None and cfg.time.dt <= 0:
        errors.append("time.dt must be positive when given")
    if not (0 < cfg.time.cfl <= 1):
        errors.append("time.cfl must lie in (0, 1]")
    if cfg.dimension == 3:
        s3 = cfg.growth.s
        if s3 is not None and s3 <= 3.5:
            errors.append(
                f"3D growth requires s > 7/2, got s = {s3}"
            )
        sg = cfg.growth.sigma
        if s3 is not None and not (0 < sg < s3 - 1):
            errors.append(
                f"3D growth exponent needs sigma in (0, s-1), got sigma = {sg}"
            )
    else:
        sg = cfg.growth.sigma
        if not (1.0 < sg <= 2.0 + cfg.delta):
            errors.append(
                f"2D growth needs sigma in (1, s] with s = 2 + delta, got sigma = {sg}"
            )
    return errors


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a YAML configuration document."""
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ConfigError([f"YAML parse error{where}: {getattr(exc, 'problem', exc)}"])
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(["top level of the config must be a mapping"])
    errors: list = []
    cfg = _build(data, errors)
    errors.extend(validate(cfg))
    if errors:
        raise ConfigError(errors)
    return cfg


def load_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def config_hash(cfg: ExperimentConfig) -> str:
    """Stable short hash of the canonicalized configuration."""
    blob = json.dumps(asdict(cfg), sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:12]
