"""Discrete volume rendering: standard, feature (VFR) and pilot modes.

Standard rendering evaluates the network once per sample and blends the
colours with the volume weights. Feature rendering blends the grid features
first and evaluates the network once per ray:

    standard:  C = sum_i w_i * net(F(x_i), d) + (1 - sum_i w_i) * bg
    feature:   C = net(sum_i w_i F(x_i) / sum_i w_i, d) * sum_i w_i + (1 - sum_i w_i) * bg

Dividing the blended feature by the opacity before the network (and scaling
the colour by it afterwards) makes the two modes coincide exactly for an
affine network, for any opacity.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import kernels
from .autodiff import ParamArray, Tape
from .errors import ShapeError, UsageError
from .hashgrid import FeatureGrid
from .nn import NetworkBundle
from .sampling import Camera, OccupancyGrid, SampleBatch, filter_occupied, generate_rays, march

EARLY_STOP_TRANSMITTANCE = 1e-4


class RenderMode(str, enum.Enum):
    STANDARD = "standard"
    VFR = "vfr"
    PILOT = "pilot"


class SceneModel:
    """Feature grid + networks bound to a world-space scene box."""

    def __init__(self, grid: FeatureGrid, bundle: NetworkBundle, aabb):
        if grid.out_dim != bundle.in_dim:
            raise ShapeError(f"grid emits {grid.out_dim} features, networks expect {bundle.in_dim}")
        self.grid = grid
        self.bundle = bundle
        self.aabb = np.asarray(aabb, dtype=np.float64)

    @property
    def dtype(self):
        return self.grid.dtype

    def parameters(self) -> dict[str, ParamArray]:
        return {**self.grid.parameters(), **self.bundle.parameters()}

    def groups(self) -> dict[str, dict[str, ParamArray]]:
        return {"grid": self.grid.parameters(), **self.bundle.groups()}

    def normalize(self, positions):
        lo, hi = self.aabb
        return np.clip((np.asarray(positions, dtype=np.float64) - lo) / (hi - lo), 0.0, 1.0)

    def density_values(self, positions, chunk=1 << 16):
        """Densities at world positions without recording anything."""
        positions = np.asarray(positions)
        out = np.empty(positions.shape[0], dtype=self.dtype)
        tape = Tape(enabled=False)
        for start in range(0, positions.shape[0], chunk):
            feats = self.grid.query_values(self.normalize(positions[start:start + chunk]))
            out[start:start + chunk] = self.bundle.density(tape, ParamArray(feats)).values
        return out


@dataclass
class RenderOutput:
    rgb: ParamArray
    opacity: ParamArray
    weights: ParamArray
    rendered_feature: ParamArray | None
    nn_eval_count: int
    samples_per_ray: np.ndarray


# -- numeric core ----------------------------------------------------------

def compute_weights(sigma, delta, offsets=None):
    """Volume weights and residual transmittance per ray.

    ``alpha_i = 1 - exp(-sigma_i delta_i)``, ``T_i = prod_{j<i} (1 - alpha_j)``,
    ``w_i = T_i alpha_i``. Without ``offsets`` the arrays form a single ray and
    ``T_final`` is returned as a scalar.
    """
    sigma = np.asarray(sigma)
    delta = np.asarray(delta)
    if sigma.shape != delta.shape or sigma.ndim != 1:
        raise ShapeError(f"sigma {sigma.shape} and delta {delta.shape} must be equal 1-D arrays")
    dtype = np.result_type(sigma.dtype, delta.dtype, np.float32)
    single = offsets is None
    if single:
        offsets = np.array([0, sigma.shape[0]], dtype=np.int64)
    w, _, t_final = kernels.volume_weights(
        np.ascontiguousarray(sigma, dtype=dtype), np.ascontiguousarray(delta, dtype=dtype),
        np.asarray(offsets, dtype=np.int64))
    return (w, float(t_final[0])) if single else (w, t_final)


def volume_weights(tape: Tape, sigma: ParamArray, deltas, offsets) -> ParamArray:
    deltas = np.ascontiguousarray(deltas, dtype=sigma.dtype)
    sv = np.ascontiguousarray(sigma.values)
    w, trans, _ = kernels.volume_weights(sv, deltas, offsets)

    def back(g):
        zero = np.zeros(offsets.shape[0] - 1, dtype=sv.dtype)
        return (kernels.volume_weights_backward(
            np.ascontiguousarray(g), zero, sv, deltas, w, trans, offsets),)

    return tape.record("volume_weights", w, (sigma,), back)


def ray_sum(tape: Tape, w: ParamArray, offsets) -> ParamArray:
    """Per-ray sum of a packed per-sample scalar (the opacity)."""
    ones = np.ones((w.shape[0], 1), dtype=w.dtype)
    total = kernels.segment_weighted_sum(np.ascontiguousarray(w.values), ones, offsets)[:, 0]
    counts = np.diff(offsets)
    return tape.record("ray_sum", total, (w,), lambda g: (np.repeat(g, counts),))


def weighted_ray_sum(tape: Tape, w: ParamArray, values: ParamArray, offsets) -> ParamArray:
    """``out[r] = sum_{i in r} w_i * values_i`` for packed samples."""
    wv = np.ascontiguousarray(w.values)
    vv = np.ascontiguousarray(values.values)
    out = kernels.segment_weighted_sum(wv, vv, offsets)
    counts = np.diff(offsets)

    def back(g):
        g_rows = np.repeat(g, counts, axis=0)
        return (g_rows * vv).sum(axis=1), g_rows * wv[:, None]

    return tape.record("weighted_ray_sum", out, (w, values), back)


def add_background(tape: Tape, color: ParamArray, opacity: ParamArray, background) -> ParamArray:
    bg = np.asarray(background, dtype=color.dtype)
    out = color.values + (1 - opacity.values)[:, None] * bg[None, :]
    return tape.record("add_background", out, (color, opacity), lambda g: (g, -(g @ bg)))


# -- rendering -------------------------------------------------------------

def _truncate(batch: SampleBatch, sigma_values):
    """Drop samples behind which the ray is already opaque (inference only)."""
    _, trans, _ = kernels.volume_weights(
        np.ascontiguousarray(sigma_values), np.ascontiguousarray(batch.deltas, dtype=sigma_values.dtype),
        batch.offsets)
    return trans >= EARLY_STOP_TRANSMITTANCE


def render_rays(model: SceneModel, batch: SampleBatch, dirs, mode, background, tape: Tape | None = None,
                early_stop=False) -> RenderOutput:
    """Render every ray in ``batch``; ``dirs`` has one unit direction per ray."""
    mode = RenderMode(mode)
    tape = tape if tape is not None else Tape(enabled=False)
    bundle = model.bundle
    dirs = np.asarray(dirs)
    if dirs.shape != (batch.n_rays, 3):
        raise ShapeError(f"expected {batch.n_rays} directions, got {dirs.shape}")
    if early_stop and tape.enabled:
        raise UsageError("early termination is for rendering only; it biases gradients")
    feats = model.grid.query(tape, model.normalize(batch.positions))
    sigma = bundle.density(tape, feats)
    if early_stop and batch.n_samples:
        keep = _truncate(batch, sigma.values)
        if not keep.all():
            batch = batch.subset(keep)
            feats = ParamArray(feats.values[keep])
            sigma = ParamArray(sigma.values[keep])
    offsets = batch.offsets
    evals_before = bundle.main_evals + bundle.pilot_evals
    w = volume_weights(tape, sigma, batch.deltas, offsets)
    opacity = ray_sum(tape, w, offsets)
    if mode is RenderMode.VFR:
        rendered = weighted_ray_sum(tape, w, feats, offsets)
        normalized = tape.div_rows(rendered, opacity)
        fg = bundle.main_forward(tape, normalized, dirs)
        color = add_background(tape, tape.mul_rows(fg, opacity), opacity, background)
    else:
        rendered = None
        sample_dirs = dirs[batch.ray_indices]
        if mode is RenderMode.PILOT:
            rgb = bundle.pilot_forward(tape, feats, sample_dirs)
        else:
            rgb = bundle.main_forward(tape, feats, sample_dirs)
        color = add_background(tape, weighted_ray_sum(tape, w, rgb, offsets), opacity, background)
    n_evals = bundle.main_evals + bundle.pilot_evals - evals_before
    return RenderOutput(color, opacity, w, rendered, n_evals, batch.counts)


def render_standard(model, batch, dirs, background, tape=None, early_stop=False):
    return render_rays(model, batch, dirs, RenderMode.STANDARD, background, tape, early_stop)


def render_vfr(model, batch, dirs, background, tape=None, early_stop=False):
    return render_rays(model, batch, dirs, RenderMode.VFR, background, tape, early_stop)


def render_pilot(model, batch, dirs, background, tape=None, step=None, pilot_steps=None,
                 early_stop=False):
    if step is not None and pilot_steps is not None and step >= pilot_steps:
        raise UsageError(f"pilot rendering requested at step {step} >= pilot_steps {pilot_steps}")
    return render_rays(model, batch, dirs, RenderMode.PILOT, background, tape, early_stop)


@dataclass
class ImageStats:
    nn_evals: int
    evals_per_pixel: np.ndarray

    @property
    def mean_evals_per_pixel(self) -> float:
        return float(self.evals_per_pixel.mean()) if self.evals_per_pixel.size else 0.0

    def histogram(self, bins=None):
        return np.bincount(self.evals_per_pixel.astype(np.int64), minlength=bins or 0)


def render_image(model: SceneModel, camera: Camera, mode, background, samples_per_ray=64,
                 occupancy: OccupancyGrid | None = None, chunk=4096, early_stop=True):
    """Row-major (H, W, 3) image plus per-pixel network-evaluation counts."""
    mode = RenderMode(mode)
    n_pix = camera.width * camera.height
    image = np.empty((n_pix, 3), dtype=np.float64)
    per_pixel = np.empty(n_pix, dtype=np.int64)
    total = 0
    for start in range(0, n_pix, chunk):
        pix = np.arange(start, min(start + chunk, n_pix))
        origins, dirs = generate_rays(camera, pix)
        batch = filter_occupied(march(origins, dirs, model.aabb, samples_per_ray), occupancy)
        out = render_rays(model, batch, dirs.astype(model.dtype), mode, background, early_stop=early_stop)
        image[pix] = out.rgb.values
        if mode is RenderMode.VFR:
            per_pixel[pix] = 1
        else:
            per_pixel[pix] = out.samples_per_ray
        total += out.nn_eval_count
    return image.reshape(camera.height, camera.width, 3), ImageStats(total, per_pixel)


def render_fields(density_fn, color_fn, batch: SampleBatch, dirs, background):
    """Standard-mode compositing of caller-supplied density and colour fields.

    ``density_fn(x)`` and ``color_fn(x, d)`` take world positions (and unit
    directions) per sample. Used to check the compositing path on scenes
    with known answers.
    """
    dirs = np.asarray(dirs, dtype=np.float64)
    sample_dirs = dirs[batch.ray_indices]
    sigma = np.asarray(density_fn(batch.positions), dtype=np.float64)
    rgb = np.asarray(color_fn(batch.positions, sample_dirs), dtype=np.float64)
    w, t_final = compute_weights(sigma, batch.deltas.astype(np.float64), batch.offsets)
    color = kernels.segment_weighted_sum(w, np.ascontiguousarray(rgb), batch.offsets)
    return color + t_final[:, None] * np.asarray(background, dtype=np.float64)[None, :]
