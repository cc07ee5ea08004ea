"""Run configuration: TOML file parsing with strict key checking."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .crf import CrfParams
from .errors import ConfigError
from .head import TrainConfig
from .labeler import LabelConfig


@dataclass
class PathsConfig:
    images: str = ""
    features: str = ""
    gnss: str = ""
    boxes: str = ""
    calibration: str = ""
    manifest: str = ""
    ground_truth: str = ""
    weights: str = ""
    output: str = ""


@dataclass
class RunConfig:
    """Everything a pipeline run needs, loadable from one TOML file."""

    paths: PathsConfig = field(default_factory=PathsConfig)
    label: LabelConfig = field(default_factory=LabelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    crf: CrfParams = field(default_factory=CrfParams)
    workers: int = 1
    log_level: str = "INFO"
    time_tolerance: float = 0.1  # max frame-to-pose timestamp gap, seconds
    save_scores: bool = True
    strict: bool = False

    def fingerprint(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _build(cls, data: dict, context: str):
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys in [{context}]: {sorted(unknown)}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad [{context}] config: {e}") from e


def load_config(path) -> RunConfig:
    """Parse a TOML run configuration, rejecting unknown keys."""
    try:
        with open(path, "rb") as f:
            data = tomllib.load(f)
    except FileNotFoundError as e:
        raise ConfigError(f"config file not found: {path}") from e
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: {e}") from e

    sections = {"paths", "label", "train", "crf"}
    top = {k: v for k, v in data.items() if k not in sections}
    cfg_kwargs = {}
    if "paths" in data:
        cfg_kwargs["paths"] = _build(PathsConfig, data["paths"], "paths")
    if "label" in data:
        label_data = dict(data["label"])
        crf_inline = label_data.pop("crf", None)
        label = _build(LabelConfig, label_data, "label")
        if crf_inline is not None:
            label = type(label)(**{**label.__dict__, "crf": _build(CrfParams, crf_inline, "label.crf")})
        cfg_kwargs["label"] = label
    if "train" in data:
        cfg_kwargs["train"] = _build(TrainConfig, data["train"], "train")
    if "crf" in data:
        cfg_kwargs["crf"] = _build(CrfParams, data["crf"], "crf")

    known_top = {f.name for f in fields(RunConfig)} - sections
    unknown = set(top) - known_top
    if unknown:
        raise ConfigError(f"unknown top-level config keys: {sorted(unknown)}")
    cfg = RunConfig(**cfg_kwargs, **top)
    if "crf" in data and "label" in cfg_kwargs and "crf" not in data.get("label", {}):
        # a top-level [crf] section applies to labeling too
        cfg.label = type(cfg.label)(**{**cfg.label.__dict__, "crf": cfg.crf})
    elif "crf" in data and "label" not in cfg_kwargs:
        cfg.label = type(cfg.label)(**{**cfg.label.__dict__, "crf": cfg.crf})
    return cfg


def validate_input_paths(cfg: RunConfig, required: list[str]) -> None:
    """Fail fast when a required input path is missing on disk."""
    for name in required:
        value = getattr(cfg.paths, name)
        if not value:
            raise ConfigError(f"paths.{name} is required but not set")
        if not Path(value).exists():
            raise ConfigError(f"paths.{name} does not exist: {value}")
