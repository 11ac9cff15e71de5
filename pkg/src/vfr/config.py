"""Plain-text run configuration: ``key = value`` lines, ``#`` comments.

Every knob has exactly one default (the field default below). Unknown keys
and malformed values are errors that cite the offending line.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigError
from .hashgrid import GridConfig
from .nn import NetworkConfig
from .train import TrainConfig


@dataclass(frozen=True)
class RunConfig:
    # rendering / schedule
    mode: str = "vfr"
    steps: int = 2000
    pilot_steps: int = 300
    pilot_trains_main: bool = False
    batch_rays: int = 1024
    samples_per_ray: int = 64
    background: tuple = (1.0, 1.0, 1.0)
    seed: int = 0
    deterministic: bool = True
    # optimiser
    lr: float = 0.01
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-15
    lr_warmup_steps: int = 100
    lr_milestones: tuple = (0.5, 0.75, 0.9)
    lr_decay: float = 0.33
    # networks
    activation: str = "gelu"
    spatial_layers: int = 2
    directional_layers: int = 4
    mlp_width: int = 64
    bottleneck_dim: int = 64
    sh_degree: int = 4
    sh_features: int = 4
    sh_encoding: str = "shfe"
    density_hidden: int = 0
    pilot_layers: int = 2
    pilot_width: int = 64
    # hash grid
    grid_levels: int = 8
    grid_channels: int = 2
    grid_base_resolution: int = 16
    grid_max_resolution: int = 256
    grid_log2_table_size: int = 15
    grid_init_scale: float = 1e-4
    # occupancy sampler
    occupancy_resolution: int = 128
    occupancy_decay: float = 0.95
    occupancy_threshold: float = 0.01  # per-step opacity, converted to a density
    occupancy_every: int = 16
    occupancy_warmup: int = 256
    # logging / safety
    log_every: int = 100
    eval_views: int = 1
    divergence_factor: float = 10.0
    divergence_patience: int = 200

    def __post_init__(self):
        try:
            self.grid_config()
            self.net_config()
            self.train_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    # -- views onto the module configs --------------------------------
    def grid_config(self) -> GridConfig:
        return GridConfig(self.grid_levels, self.grid_channels, self.grid_base_resolution,
                          self.grid_max_resolution, 2 ** self.grid_log2_table_size, self.grid_init_scale)

    def net_config(self) -> NetworkConfig:
        return NetworkConfig(
            activation=self.activation, spatial_layers=self.spatial_layers,
            directional_layers=self.directional_layers, width=self.mlp_width,
            bottleneck_dim=self.bottleneck_dim, sh_degree=self.sh_degree, sh_features=self.sh_features,
            sh_encoding=self.sh_encoding, density_hidden=self.density_hidden,
            pilot_layers=self.pilot_layers, pilot_width=self.pilot_width)

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            steps=self.steps, pilot_steps=self.pilot_steps, batch=self.batch_rays, lr=self.lr,
            betas=(self.adam_beta1, self.adam_beta2), eps=self.adam_eps, mode=self.mode,
            warmup_steps=self.lr_warmup_steps, milestones=tuple(self.lr_milestones),
            decay=self.lr_decay, seed=self.seed, samples_per_ray=self.samples_per_ray,
            occupancy_resolution=self.occupancy_resolution, occupancy_decay=self.occupancy_decay,
            occupancy_threshold=self.occupancy_threshold, occupancy_every=self.occupancy_every,
            occupancy_warmup=self.occupancy_warmup, log_every=self.log_every,
            pilot_trains_main=self.pilot_trains_main, divergence_factor=self.divergence_factor,
            divergence_patience=self.divergence_patience, background=tuple(self.background))

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    # -- text form ----------------------------------------------------
    def to_dict(self) -> dict:
        return {f.name: (list(v) if isinstance(v := getattr(self, f.name), tuple) else v)
                for f in fields(self)}

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name: f for f in fields(cls)}
        unknown = sorted(set(data) - set(known))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        values = {k: tuple(v) if isinstance(v, list) else v for k, v in data.items()}
        return cls(**values)

    def dumps(self) -> str:
        lines = []
        for f in fields(self):
            lines.append(f"{f.name} = {format_value(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"


def format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ", ".join(format_value(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}


def _parse_scalar(kind, text: str):
    if kind is bool:
        low = text.lower()
        if low in _TRUE:
            return True
        if low in _FALSE:
            return False
        raise ValueError(f"expected a boolean, got {text!r}")
    if kind is int:
        return int(text)
    if kind is float:
        return float(text)
    return text


def parse_value(name: str, text: str):
    default = getattr(RunConfig, name)
    text = text.strip()
    if isinstance(default, tuple):
        parts = [p for p in text.replace(",", " ").split()]
        kind = type(default[0]) if default else float
        return tuple(_parse_scalar(kind, p) for p in parts)
    return _parse_scalar(type(default), text)


def parse_overrides(text: str, source="<config>") -> dict:
    known = {f.name for f in fields(RunConfig)}
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            out[key] = parse_value(key, value)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from exc
    return out


def loads(text: str, source="<config>", base: RunConfig | None = None) -> RunConfig:
    overrides = parse_overrides(text, source)
    try:
        return dataclasses.replace(base or RunConfig(), **overrides)
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from exc


def load(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc}") from exc
    return loads(text, str(path))
