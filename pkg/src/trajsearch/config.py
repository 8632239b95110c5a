"""Declarative pipeline configuration.

Defaults reproduce the published preprocessing and training settings: 50-point
length filter, 50m grid cells, 256-d middle / 128-d output embeddings, step
decay by 0.1 every 5 epochs. A JSON config file can override defaults, and
command-line flags override the file.
"""

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

from .errors import InputError
from .gnn import TrainConfig


@dataclass
class PipelineConfig:
    input: str = ""
    format: str = "canonical_jsonl"
    out_dir: str = "out"
    min_points: int = 50
    cell_size_m: float = 50.0
    filter_after_grid: bool = False
    distance: str = "frechet"
    m: int = 3
    c0_percentile: float = 10.0
    epochs: int = 30
    lr: float = 0.01
    optimizer: str = "adam"
    scheduler_step: int = 5
    scheduler_factor: float = 0.1
    seed: int = 0
    mid_dim: int = 256
    out_dim: int = 128
    workers: int = 1
    single_scale: bool = False
    no_sequential_connection: bool = False
    no_edge_bias: bool = False

    @property
    def effective_m(self):
        return 1 if self.single_scale else self.m

    def train_config(self):
        return TrainConfig(epochs=self.epochs, lr=self.lr, optimizer=self.optimizer,
                           scheduler_step=self.scheduler_step,
                           scheduler_factor=self.scheduler_factor, seed=self.seed,
                           mid_dim=self.mid_dim, out_dim=self.out_dim,
                           edge_bias=not self.no_edge_bias,
                           sequential=not self.no_sequential_connection)

    def to_dict(self):
        return dataclasses.asdict(self)


_FIELDS = {f.name: f.type for f in dataclasses.fields(PipelineConfig)}


def load_config(path):
    """Read a JSON config file; unknown keys are rejected."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: invalid config JSON: {exc}") from None
    if not isinstance(data, dict):
        raise InputError(f"{path}: config must be a JSON object")
    unknown = set(data) - set(_FIELDS)
    if unknown:
        raise InputError(f"{path}: unknown config keys {sorted(unknown)}")
    return data


def build_config(config_path=None, overrides=None):
    """Layer defaults < config file < explicit flag overrides."""
    values = {}
    if config_path:
        if not Path(config_path).exists():
            raise FileNotFoundError(f"no such config file: {config_path}")
        values.update(load_config(config_path))
    for key, val in (overrides or {}).items():
        if val is not None:
            if key not in _FIELDS:
                raise InputError(f"unknown config override {key!r}")
            values[key] = val
    return PipelineConfig(**values)
