"""Multiresolution hashed feature grid.

Each level is a vertex-centred grid of resolution ``r`` (corner ``i`` sits at
``i / r``). Levels whose ``(r + 1) ** 3`` corners fit in the table size are
stored densely; finer levels hash corner coordinates into exactly
``table_size`` entries and accept collisions. All levels live in one
contiguous parameter table addressed through per-level offsets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .autodiff import ParamArray, Tape
from .errors import DomainError, ShapeError

PRIMES = (1, 2654435761, 805459861)


@dataclass(frozen=True)
class GridConfig:
    levels: int = 8
    channels: int = 2
    base_resolution: int = 16
    max_resolution: int = 256
    table_size: int = 2 ** 15
    init_scale: float = 1e-4

    def __post_init__(self):
        if self.levels < 1:
            raise ValueError("levels must be >= 1")
        if self.channels < 1:
            raise ValueError("channels must be >= 1")
        if self.table_size < 1 or self.table_size & (self.table_size - 1):
            raise ValueError(f"table_size must be a power of two, got {self.table_size}")
        if not 1 <= self.base_resolution <= self.max_resolution:
            raise ValueError("need 1 <= base_resolution <= max_resolution")

    @property
    def growth_factor(self) -> float:
        if self.levels == 1:
            return 1.0
        return math.exp((math.log(self.max_resolution) - math.log(self.base_resolution)) / (self.levels - 1))

    @property
    def out_dim(self) -> int:
        return self.levels * self.channels

    def resolutions(self) -> list[int]:
        return [level_resolution(self, lvl) for lvl in range(self.levels)]


def level_resolution(config: GridConfig, level: int) -> int:
    """``floor(N_min * b ** level)``; the finest level is pinned to ``N_max``."""
    if not 0 <= level < config.levels:
        raise DomainError(f"level {level} out of range for {config.levels} levels")
    if config.levels > 1 and level == config.levels - 1:
        return config.max_resolution
    # guard against b**level landing a hair under an integer
    return int(math.floor(config.base_resolution * config.growth_factor ** level + 1e-9))


def hash_index(coord, table_size: int):
    """Spatial hash of non-negative integer corner coordinates (..., 3)."""
    c = np.asarray(coord)
    if np.any(c < 0):
        raise DomainError("hash coordinates must be non-negative")
    c = c.astype(np.uint64)
    h = c[..., 0] ^ (c[..., 1] * np.uint64(PRIMES[1])) ^ (c[..., 2] * np.uint64(PRIMES[2]))
    out = h & np.uint64(table_size - 1)
    return out.astype(np.int64) if out.ndim else int(out)


class FeatureGrid:
    """Learnable feature function ``F: [0, 1]^3 -> R^(levels * channels)``."""

    def __init__(self, config: GridConfig, rng=None, dtype=np.float32):
        self.config = config
        rng = np.random.default_rng(rng)
        self.resolutions = np.array(config.resolutions(), dtype=np.int64)
        dense_sizes = (self.resolutions + 1) ** 3
        self.hashed = dense_sizes > config.table_size
        self.level_sizes = np.where(self.hashed, config.table_size, dense_sizes).astype(np.int64)
        self.offsets = np.concatenate(([0], np.cumsum(self.level_sizes)[:-1])).astype(np.int64)
        n_entries = int(self.level_sizes.sum())
        init = rng.uniform(-config.init_scale, config.init_scale, size=(n_entries, config.channels))
        self.table = ParamArray(init.astype(dtype), requires_grad=True, name="grid.table")

    @property
    def out_dim(self) -> int:
        return self.config.out_dim

    @property
    def dtype(self):
        return self.table.dtype

    def parameters(self) -> dict[str, ParamArray]:
        return {"grid.table": self.table}

    def level_table(self, level: int):
        """View of one level's rows in the shared table."""
        start = self.offsets[level]
        return self.table.values[start:start + self.level_sizes[level]]

    def _check_points(self, x):
        x = np.asarray(x)
        if x.ndim != 2 or x.shape[1] != 3:
            raise ShapeError(f"query points must have shape (n, 3), got {x.shape}")
        if x.size and (x.min() < 0.0 or x.max() > 1.0 or not np.isfinite(x).all()):
            raise DomainError("query point outside the unit cube")
        return x

    def encode(self, x):
        """Raw kernel call: (features, corner indices, corner weights)."""
        x = self._check_points(x)
        return kernels.grid_encode(
            np.ascontiguousarray(x, dtype=np.float64), self.table.values, self.offsets,
            self.resolutions, self.hashed, self.config.table_size)

    def query(self, tape: Tape, x) -> ParamArray:
        """Trilinearly interpolated features at points ``x`` of shape (n, 3)."""
        feats, idx, wts = self.encode(x)
        table = self.table

        def back(g):
            grad = np.zeros_like(table.values)
            kernels.grid_scatter(np.ascontiguousarray(g, dtype=table.dtype), idx, wts, grad)
            return (grad,)

        return tape.record("grid_query", feats, (table,), back)

    def query_values(self, x):
        return self.encode(x)[0]


def query_feature(grid: FeatureGrid, x, tape: Tape | None = None):
    """Functional form of :meth:`FeatureGrid.query`."""
    return grid.query(tape if tape is not None else Tape(enabled=False), x)
