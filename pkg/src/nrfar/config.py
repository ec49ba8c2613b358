"""Single-file run configuration with a stable content hash."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import os
import typing
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .activity import ActivityConfig
from .dsp import DspConfig
from .errors import ConfigError
from .evaluation import BalancePlan
from .jm import DetectorConfig
from .neural import TrainConfig
from .noise import SNR_GRID_DB, NoiseSource
from .pipeline import PipelineConfig
from .protocol import ProtocolConfig

CONFIG_VERSION = 1
SEED_ENV = "NRFAR_SEED"


@dataclass(frozen=True)
class CorpusConfig:
    n_recordings: int = 10
    duration_s: float = 4320.0
    floor_rms: float = 0.005

    def validate(self) -> None:
        if self.n_recordings <= 0 or self.duration_s <= 0 or self.floor_rms < 0:
            raise ConfigError("corpus needs a positive size and duration")


@dataclass(frozen=True)
class NoiseSpec:
    kind: str = "white"
    clip_dir: str | None = None
    name: str | None = None

    def source(self) -> NoiseSource:
        return NoiseSource(self.kind, self.clip_dir, name=self.name)


@dataclass(frozen=True)
class ExperimentConfig:
    n_folds: int = 5
    snr_grid: tuple[float, ...] = SNR_GRID_DB
    noise: tuple[NoiseSpec, ...] = (NoiseSpec(),)
    include_clean: bool = True
    workers: int = 1

    def validate(self) -> None:
        if self.n_folds < 2:
            raise ConfigError("at least two folds are needed")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        if not self.noise:
            raise ConfigError("at least one noise source is needed")
        for n in self.noise:
            n.source()  # raises on a bad spec


@dataclass(frozen=True)
class RunConfig:
    version: int = CONFIG_VERSION
    seed: int = 0
    dsp: DspConfig = field(default_factory=DspConfig)
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    activity: ActivityConfig = field(default_factory=ActivityConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    balance: BalancePlan = field(default_factory=BalancePlan)
    corpus: CorpusConfig = field(default_factory=CorpusConfig)
    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)
    jm_model: str | None = None
    activity_model: str | None = None

    def validate(self) -> "RunConfig":
        if self.version != CONFIG_VERSION:
            raise ConfigError(f"config version {self.version} is not supported (expected {CONFIG_VERSION})")
        self.pipeline().validate()
        self.corpus.validate()
        self.experiment.validate()
        b = self.balance
        if not 0 <= b.undersample_frac < 1 or b.oversample_frac < 0 or b.k < 1:
            raise ConfigError("invalid balancing plan")
        return self

    def pipeline(self) -> PipelineConfig:
        """Pipeline settings with the run seed applied to every stochastic step."""
        return PipelineConfig(
            dsp=self.dsp, detector=self.detector, activity=self.activity,
            train=dataclasses.replace(self.train, seed=self.seed),
            balance=dataclasses.replace(self.balance, seed=self.seed),
        )

    def protocol(self) -> ProtocolConfig:
        e = self.experiment
        return ProtocolConfig(tuple(e.snr_grid), tuple(n.source() for n in e.noise), e.include_clean,
                              noise_seed=self.seed + 1000, workers=e.workers)

    def to_dict(self) -> dict:
        return _plain(dataclasses.asdict(self))

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def stamp(self) -> dict:
        return {"config_hash": self.hash()[:16], "seed": self.seed}


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, float) and math.isinf(obj):
        return "inf" if obj > 0 else "-inf"
    return obj


def _build(cls, data):
    """Recursively construct dataclass ``cls`` from plain data, rejecting unknown keys."""
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{cls.__name__} section must be a mapping")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    kw = {}
    for key, value in data.items():
        kw[key] = _convert(hints[key], value, f"{cls.__name__}.{key}")
    try:
        return cls(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _convert(tp, value, where):
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if dataclasses.is_dataclass(tp):
        return _build(tp, value)
    if origin is typing.Union or (origin is not None and type(None) in args):
        if value is None:
            return None
        inner = [a for a in args if a is not type(None)]
        return _convert(inner[0], value, where)
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{where} must be a list")
        inner = args[0]
        return tuple(_convert(inner, v, where) for v in value)
    if tp is float:
        if isinstance(value, str) and value.strip().lower() in ("inf", "+inf", "-inf"):
            return float(value)
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ConfigError(f"{where} must be a number")
        return float(value)
    if tp is int:
        if not isinstance(value, int) or isinstance(value, bool):
            raise ConfigError(f"{where} must be an integer")
        return value
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where} must be true or false")
        return value
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where} must be a string")
        return value
    return value


def from_dict(data: dict | None, env: typing.Mapping[str, str] | None = None) -> RunConfig:
    cfg = _build(RunConfig, data or {})
    env = os.environ if env is None else env
    if env.get(SEED_ENV):
        try:
            cfg = dataclasses.replace(cfg, seed=int(env[SEED_ENV]))
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV} must be an integer") from exc
    return cfg.validate()


def load_config(path=None, env: typing.Mapping[str, str] | None = None) -> RunConfig:
    """Read a YAML run config (defaults when ``path`` is None); ``NRFAR_SEED`` overrides the seed."""
    if path is None:
        return from_dict({}, env)
    try:
        data = yaml.safe_load(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    return from_dict(data, env)


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)
