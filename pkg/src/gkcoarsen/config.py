"""TOML run configuration.

Example::

    method = "gk"                 # gk | full | static_random | static_feature_kmeans
    seeds = [0, 1, 2]
    output = "runs/cora_gk_r025"  # relative paths are placed under $GK_OUTPUT_ROOT if set
    plots = true

    [data]
    path = "data/cora"            # canonical dataset directory, or a [data.synthetic] table
    split = "file"                # "file": use splits.json; "random": fresh split per seed
    fractions = [0.6, 0.2, 0.2]
    balanced = false

    [train]                       # any TrainConfig field except seed
    arch = "gcn"
    ratio = 0.25
    period = 50                   # TOML accepts inf
    delta = 0.1
    max_epochs = 300
"""

from __future__ import annotations

import dataclasses
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import tomli
import tomli_w

from .graph import Graph, generate_sbm
from .datasets import load_dataset, resplit
from .trainer import TrainConfig

METHODS = ("gk", "full", "static_random", "static_feature_kmeans")
OUTPUT_ROOT_ENV = "GK_OUTPUT_ROOT"
_TRAIN_FIELDS = {f.name for f in dataclasses.fields(TrainConfig)} - {"seed"}
_SBM_KEYS = {"n", "classes", "p_in", "p_out", "feature_dim", "feature_noise", "seed"}


class ConfigError(ValueError):
    pass


@dataclass
class DataSpec:
    path: str | None = None
    synthetic: dict[str, Any] | None = None
    split: str = "file"
    fractions: tuple[float, float, float] = (0.6, 0.2, 0.2)
    balanced: bool = False

    def __post_init__(self):
        if (self.path is None) == (self.synthetic is None):
            raise ConfigError("exactly one of data.path and data.synthetic must be given")
        if self.synthetic is not None:
            missing = _SBM_KEYS - set(self.synthetic) - {"seed"}
            unknown = set(self.synthetic) - _SBM_KEYS
            if missing or unknown:
                raise ConfigError(f"data.synthetic: missing {sorted(missing)}, unknown {sorted(unknown)}")
        if self.split not in ("file", "random"):
            raise ConfigError(f"data.split must be 'file' or 'random', got {self.split!r}")
        self.fractions = tuple(float(f) for f in self.fractions)
        if len(self.fractions) != 3:
            raise ConfigError("data.fractions needs three values")

    def load_base(self) -> Graph:
        if self.path is not None:
            return load_dataset(self.path)
        return generate_sbm(**{"seed": 0, **self.synthetic})

    def for_seed(self, base: Graph, seed: int) -> Graph:
        if self.split == "random":
            return resplit(base, self.fractions, self.balanced, seed)
        return base


@dataclass
class RunConfig:
    data: DataSpec
    train: TrainConfig = field(default_factory=TrainConfig)
    method: str = "gk"
    seeds: list[int] = field(default_factory=lambda: [0])
    output: str = "runs/default"
    plots: bool = True

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if not self.seeds:
            raise ConfigError("seeds must be nonempty")
        if self.method != "full" and self.train.k is None and self.train.ratio is None:
            raise ConfigError("coarsened methods need train.ratio or train.k")

    def output_dir(self) -> Path:
        out = Path(self.output)
        root = os.environ.get(OUTPUT_ROOT_ENV)
        if root and not out.is_absolute():
            out = Path(root) / out
        return out

    def train_config(self, seed: int, **overrides) -> TrainConfig:
        return dataclasses.replace(self.train, seed=seed, **overrides)

    def to_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = {
            "split": self.data.split,
            "fractions": list(self.data.fractions),
            "balanced": self.data.balanced,
        }
        if self.data.path is not None:
            data["path"] = self.data.path
        else:
            data["synthetic"] = dict(self.data.synthetic)
        train = {k: v for k, v in dataclasses.asdict(self.train).items() if k != "seed" and v is not None}
        return {
            "method": self.method,
            "seeds": list(self.seeds),
            "output": self.output,
            "plots": self.plots,
            "data": data,
            "train": train,
        }

    def to_toml(self) -> str:
        return tomli_w.dumps(self.to_dict())


def _num(v):
    if isinstance(v, str) and v.strip().lower() in ("inf", "infinity", "+inf"):
        return math.inf
    return v


def config_from_dict(raw: dict[str, Any]) -> RunConfig:
    raw = dict(raw)
    data_raw = dict(raw.pop("data", {}))
    train_raw = dict(raw.pop("train", {}))
    unknown = set(train_raw) - _TRAIN_FIELDS
    if unknown:
        raise ConfigError(f"unknown [train] keys: {sorted(unknown)}")
    for key in ("period", "delta"):
        if key in train_raw:
            train_raw[key] = _num(train_raw[key])
    known_top = {"method", "seeds", "output", "plots"}
    if set(raw) - known_top:
        raise ConfigError(f"unknown top-level keys: {sorted(set(raw) - known_top)}")
    try:
        data = DataSpec(**data_raw)
        train = TrainConfig(**train_raw)
        return RunConfig(data=data, train=train, **raw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None


def load_config(path: str | os.PathLike) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config not found: {path}")
    try:
        raw = tomli.loads(path.read_text())
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return config_from_dict(raw)
