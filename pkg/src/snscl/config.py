"""File-backed experiment configuration.

An INI file with four optional sections::

    [data]   blob generator parameters plus ``seed`` (the data seed)
    [noise]  kind = symmetric | asymmetric, rate
    [train]  any TrainingConfig field; ``seed`` is the training seed
    [run]    label

Unknown sections or keys are rejected.  The noise seed is derived from the
data seed so that all randomness flows from two named seeds.
"""

from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .data import NoiseSpec
from .trainer import TrainingConfig

NOISE_SEED_OFFSET = 1000


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DataConfig:
    num_classes: int = 10
    dim: int = 2
    n_per_class: int = 200
    n_test_per_class: int = 100
    super_groups: int = 5
    intra_spread: float = 1.0
    inter_spread: float = 8.0
    cluster_std: float = 0.5
    seed: int = 0


@dataclass(frozen=True)
class NoiseConfig:
    kind: str = "symmetric"
    rate: float = 0.4


@dataclass
class ExperimentConfig:
    data: DataConfig = field(default_factory=DataConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    train: TrainingConfig = field(default_factory=TrainingConfig)
    label: str = ""

    @property
    def noise_seed(self) -> int:
        return self.data.seed + NOISE_SEED_OFFSET

    def noise_spec(self) -> NoiseSpec:
        return NoiseSpec(self.noise.kind, self.noise.rate, self.noise_seed)

    def to_dict(self) -> dict:
        return {
            "data": asdict(self.data),
            "noise": asdict(self.noise),
            "train": self.train.to_dict(),
            "label": self.label,
        }

    def data_hash(self) -> str:
        return _digest({"data": asdict(self.data), "noise": asdict(self.noise)})

    def config_hash(self) -> str:
        return _digest(self.to_dict())

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return replace(self, data=replace(self.data, seed=seed), train=replace(self.train, seed=seed))


def _digest(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, default=list).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _coerce(raw: str, like, key: str):
    """Parse ``raw`` into the type of the default value ``like``."""
    try:
        if isinstance(like, bool):
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(like, int):
            return int(raw)
        if isinstance(like, float):
            return float(raw)
        if isinstance(like, tuple):
            return tuple(int(v) for v in raw.replace(",", " ").split())
        return raw.strip()
    except ValueError:
        raise ConfigError(f"bad value for {key!r}: {raw!r}") from None


def _section(parser: configparser.ConfigParser, name: str, cls, defaults):
    if not parser.has_section(name):
        return {}
    allowed = {f.name: getattr(defaults, f.name) for f in fields(cls)}
    out = {}
    for key, raw in parser.items(name):
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r} in [{name}]")
        out[key] = _coerce(raw, allowed[key], f"{name}.{key}")
    return out


def parse_config(text: str) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    unknown = set(parser.sections()) - {"data", "noise", "train", "run"}
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(sorted(unknown))}")

    run_keys = dict(parser.items("run")) if parser.has_section("run") else {}
    extra = set(run_keys) - {"label"}
    if extra:
        raise ConfigError(f"unknown key(s) in [run]: {', '.join(sorted(extra))}")
    try:
        data = DataConfig(**_section(parser, "data", DataConfig, DataConfig()))
        noise = NoiseConfig(**_section(parser, "noise", NoiseConfig, NoiseConfig()))
        NoiseSpec(noise.kind, noise.rate)
        train = TrainingConfig(**_section(parser, "train", TrainingConfig, TrainingConfig()))
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    return ExperimentConfig(data, noise, train, run_keys.get("label", ""))


def load_config(path: str | Path | None) -> ExperimentConfig:
    """Read an INI file; ``None`` gives the all-defaults configuration."""
    if path is None:
        return ExperimentConfig()
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text)
