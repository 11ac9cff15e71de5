"""Rays, scene-box intersection, stratified sampling and the occupancy grid.

Samples for a batch of rays are stored packed: all samples of ray 0, then
ray 1, ... with ``offsets[r]:offsets[r + 1]`` delimiting ray ``r``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError


@dataclass
class Camera:
    """Pinhole camera; ``pose`` is camera-to-world, looking down -z, +y up."""

    pose: np.ndarray
    focal: float
    width: int
    height: int

    def __post_init__(self):
        self.pose = np.asarray(self.pose, dtype=np.float64)
        if self.pose.shape != (4, 4):
            raise DomainError(f"pose must be 4x4, got {self.pose.shape}")
        if not np.isfinite(self.pose).all() or abs(np.linalg.det(self.pose[:3, :3])) < 1e-8:
            raise DomainError("degenerate camera pose")
        if not self.focal > 0:
            raise DomainError(f"focal length must be positive, got {self.focal}")

    @classmethod
    def from_fov(cls, pose, camera_angle_x: float, width: int, height: int) -> "Camera":
        return cls(pose, 0.5 * width / np.tan(0.5 * camera_angle_x), width, height)


@dataclass
class Ray:
    origin: np.ndarray
    direction: np.ndarray
    t_near: float
    t_far: float


def generate_rays(camera: Camera, pixels=None):
    """World-space origins and unit directions through pixel centres.

    ``pixels`` are flat row-major indices (default: every pixel).
    """
    if pixels is None:
        pixels = np.arange(camera.width * camera.height)
    pixels = np.asarray(pixels, dtype=np.int64)
    i = (pixels % camera.width).astype(np.float64)
    j = (pixels // camera.width).astype(np.float64)
    d_cam = np.stack([
        (i + 0.5 - 0.5 * camera.width) / camera.focal,
        -(j + 0.5 - 0.5 * camera.height) / camera.focal,
        -np.ones_like(i),
    ], axis=-1)
    dirs = d_cam @ camera.pose[:3, :3].T
    dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
    origins = np.broadcast_to(camera.pose[:3, 3], dirs.shape).copy()
    return origins, dirs


def intersect_aabb(origins, dirs, aabb):
    """Slab test. Returns ``(t_near, t_far, hit)`` with t_near clipped at 0."""
    origins = np.atleast_2d(np.asarray(origins, dtype=np.float64))
    dirs = np.atleast_2d(np.asarray(dirs, dtype=np.float64))
    lo, hi = np.asarray(aabb, dtype=np.float64)
    if np.any(lo >= hi):
        raise DomainError(f"invalid box {aabb}")
    parallel = dirs == 0
    safe = np.where(parallel, 1.0, dirs)
    t0 = (lo - origins) / safe
    t1 = (hi - origins) / safe
    inside = (origins >= lo) & (origins <= hi)
    # a ray parallel to a slab is unconstrained inside it and misses outside it
    t0 = np.where(parallel, np.where(inside, -np.inf, np.inf), t0)
    t1 = np.where(parallel, np.inf, t1)
    t_near = np.maximum(np.minimum(t0, t1).max(axis=-1), 0.0)
    t_far = np.maximum(t0, t1).min(axis=-1)
    hit = t_far > t_near
    return t_near, t_far, hit


def intersect_ray(ray_origin, ray_dir, aabb):
    """Single-ray form: ``(t_near, t_far)`` or ``None`` on a miss."""
    tn, tf, hit = intersect_aabb(ray_origin, ray_dir, aabb)
    return (float(tn[0]), float(tf[0])) if hit[0] else None


def sample_stratified(t_near, t_far, n: int, jitter=False, rng=None):
    """``n`` equal bins over each ``[t_near, t_far]``; one sample per bin.

    Returns ``(t, delta)`` of shape (rays, n).
    """
    if n < 1:
        raise ValueError("need at least one sample per ray")
    t_near = np.atleast_1d(np.asarray(t_near, dtype=np.float64))
    t_far = np.atleast_1d(np.asarray(t_far, dtype=np.float64))
    width = (t_far - t_near)[:, None] / n
    lower = t_near[:, None] + width * np.arange(n)[None, :]
    if jitter:
        u = np.random.default_rng(rng).random((t_near.shape[0], n))
    else:
        u = 0.5
    t = lower + width * u
    return t, np.broadcast_to(width, t.shape).copy()


@dataclass
class SampleBatch:
    offsets: np.ndarray
    t: np.ndarray
    deltas: np.ndarray
    positions: np.ndarray

    @property
    def n_rays(self) -> int:
        return self.offsets.shape[0] - 1

    @property
    def n_samples(self) -> int:
        return self.t.shape[0]

    @property
    def counts(self):
        return np.diff(self.offsets)

    @property
    def ray_indices(self):
        return np.repeat(np.arange(self.n_rays), self.counts)

    def subset(self, keep) -> "SampleBatch":
        keep = np.asarray(keep, dtype=bool)
        csum = np.concatenate(([0], np.cumsum(keep, dtype=np.int64)))
        offsets = csum[self.offsets].astype(np.int64)
        return SampleBatch(offsets, self.t[keep], self.deltas[keep], self.positions[keep])


def march(origins, dirs, aabb, n: int, jitter=False, rng=None) -> SampleBatch:
    """Stratified samples inside the scene box for every ray (misses get none)."""
    origins = np.atleast_2d(origins)
    dirs = np.atleast_2d(dirs)
    t_near, t_far, hit = intersect_aabb(origins, dirs, aabb)
    t, delta = sample_stratified(t_near[hit], t_far[hit], n, jitter, rng)
    counts = np.where(hit, n, 0)
    offsets = np.concatenate(([0], np.cumsum(counts))).astype(np.int64)
    ray_of = np.repeat(np.nonzero(hit)[0], n)
    t = t.reshape(-1)
    positions = origins[ray_of] + t[:, None] * dirs[ray_of]
    lo, hi = np.asarray(aabb, dtype=np.float64)
    positions = np.clip(positions, lo, hi)
    return SampleBatch(offsets, t, delta.reshape(-1), positions)


def density_threshold(opacity, aabb, samples_per_ray):
    """Density at which one nominal step (box diagonal / samples) reaches ``opacity``."""
    if not 0.0 < opacity < 1.0:
        raise ValueError(f"occupancy opacity threshold must lie in (0, 1), got {opacity}")
    lo, hi = np.asarray(aabb, dtype=np.float64)
    step = float(np.linalg.norm(hi - lo)) / samples_per_ray
    return -math.log1p(-opacity) / step


class OccupancyGrid:
    """Binary voxel mask over the scene box driven by a decayed density max."""

    def __init__(self, aabb, resolution=128, decay=0.95, threshold=0.01):
        self.aabb = np.asarray(aabb, dtype=np.float64)
        self.resolution = int(resolution)
        self.decay = float(decay)
        self.threshold = float(threshold)
        self.density_ema = np.zeros(self.resolution ** 3, dtype=np.float32)
        self.bitfield = np.ones(self.resolution ** 3, dtype=bool)

    def voxel_index(self, positions):
        lo, hi = self.aabb
        u = (np.asarray(positions, dtype=np.float64) - lo) / (hi - lo)
        v = np.clip(np.floor(u * self.resolution), 0, self.resolution - 1).astype(np.int64)
        r = self.resolution
        return v[..., 0] * r * r + v[..., 1] * r + v[..., 2]

    def occupied(self, positions):
        return self.bitfield[self.voxel_index(positions)]

    def mark_all(self):
        self.bitfield[:] = True

    @property
    def occupied_fraction(self) -> float:
        return float(self.bitfield.mean())

    def voxel_centers(self):
        r = self.resolution
        g = (np.arange(r) + 0.5) / r
        u = np.stack(np.meshgrid(g, g, g, indexing="ij"), axis=-1).reshape(-1, 3)
        lo, hi = self.aabb
        return lo + u * (hi - lo)

    def update(self, density_fn, rng=None, chunk=1 << 17):
        """One maintenance pass: every voxel gets one random-point density probe."""
        rng = np.random.default_rng(rng)
        r = self.resolution
        lo, hi = self.aabb
        n = r ** 3
        for start in range(0, n, chunk):
            flat = np.arange(start, min(start + chunk, n))
            ijk = np.stack([flat // (r * r), (flat // r) % r, flat % r], axis=-1)
            u = (ijk + rng.random(ijk.shape)) / r
            sigma = np.asarray(density_fn(lo + u * (hi - lo)), dtype=np.float32)
            self.density_ema[flat] = np.maximum(self.density_ema[flat] * self.decay, sigma)
        self.bitfield = self.density_ema > self.threshold


def filter_occupied(batch: SampleBatch, grid: OccupancyGrid | None) -> SampleBatch:
    if grid is None:
        return batch
    return batch.subset(grid.occupied(batch.positions))
