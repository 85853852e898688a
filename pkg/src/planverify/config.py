"""Run configuration."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping

from .projector import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ProjectorConfig:
    hidden1: int = 128
    hidden2: int = 32
    latent_dim: int = 10
    lr: float = 1e-3
    epochs: int = 10
    batch_size: int = 20
    optimizer: str = "adam"

    def train_config(self, input_dim: int, seed: int) -> TrainConfig:
        try:
            return TrainConfig(input_dim, self.hidden1, self.hidden2, self.latent_dim, self.lr, self.epochs,
                               self.batch_size, seed, self.optimizer)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


@dataclass(frozen=True)
class RunConfig:
    backend: str = "mock"
    seed: int = 0
    tau: float = 0.8
    # backends
    endpoint: str = ""
    chat_model: str = ""
    embedding_model: str = ""
    timeout: float = 30.0
    concurrency: int = 4
    cache_dir: str = ""
    error_rate: float = 0.2
    embedding_dim: int = 1536
    prompt: str = ""
    # corpus
    domain: str = "carla"
    corpus: str = ""
    mapping: str = ""
    specs: str = ""
    rules: str = ""
    ts: str = ""
    train_tasks: int = 200
    calibration_tasks: int = 200
    heldout_tasks: int = 100
    # artifacts
    out_dir: str = "run"
    projector: ProjectorConfig = field(default_factory=ProjectorConfig)

    def __post_init__(self):
        if self.backend not in ("mock", "remote"):
            raise ConfigError(f"backend must be 'mock' or 'remote', got {self.backend!r}")
        if not 0.5 < self.tau <= 1.0:
            raise ConfigError(f"tau must lie in (0.5, 1], got {self.tau}")
        if not 0.0 <= self.error_rate <= 1.0:
            raise ConfigError("error_rate must lie in [0, 1]")
        if self.concurrency < 1:
            raise ConfigError("concurrency must be at least 1")

    def to_doc(self) -> dict:
        return asdict(self)

    @classmethod
    def from_doc(cls, doc: Mapping[str, Any]) -> "RunConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(doc) - names
        if unknown:
            raise ConfigError(f"unknown configuration keys {sorted(unknown)}")
        kwargs = dict(doc)
        if "projector" in kwargs:
            proj = kwargs["projector"]
            pnames = {f.name for f in fields(ProjectorConfig)}
            bad = set(proj) - pnames
            if bad:
                raise ConfigError(f"unknown projector keys {sorted(bad)}")
            kwargs["projector"] = ProjectorConfig(**proj)
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def dumps(self) -> str:
        return json.dumps(self.to_doc(), indent=2, sort_keys=True) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: configuration must be an object")
        return cls.from_doc(doc)

    def train_config(self) -> TrainConfig:
        return self.projector.train_config(self.embedding_dim, self.seed)
