"""Training loop: photometric MSE, Adam, pilot handoff and occupancy upkeep.

Steps ``0 .. pilot_steps-1`` render through the pilot network and update only
the grid, density mapper and pilot. At ``pilot_steps`` the pilot is dropped
and the main network (fresh weights) trains in the configured mode.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .autodiff import ParamArray, Tape
from .errors import DivergenceError, NumericError, UsageError
from .hashgrid import FeatureGrid, GridConfig
from .metrics import psnr, ssim
from .nn import NetworkBundle, NetworkConfig
from .render import RenderMode, SceneModel, render_image, render_rays
from .sampling import OccupancyGrid, density_threshold, filter_occupied, march
from .scene import SceneDataset

METRIC_COLUMNS = ("step", "loss", "psnr_train", "psnr_eval", "lr", "nn_evals_per_ray")


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 2000
    pilot_steps: int = 300
    batch: int = 1024
    lr: float = 0.01
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-15
    mode: str = "vfr"
    warmup_steps: int = 100
    milestones: tuple[float, ...] = (0.5, 0.75, 0.9)
    decay: float = 0.33
    seed: int = 0
    samples_per_ray: int = 64
    occupancy_resolution: int = 128
    occupancy_decay: float = 0.95
    occupancy_threshold: float = 0.01  # opacity of one nominal step, see density_threshold
    occupancy_every: int = 16
    occupancy_warmup: int = 256
    log_every: int = 100
    pilot_trains_main: bool = False
    divergence_factor: float = 10.0
    divergence_patience: int = 200
    background: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be positive")
        if not 0 <= self.pilot_steps < self.steps:
            raise ValueError(f"pilot_steps ({self.pilot_steps}) must lie in [0, steps={self.steps})")
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if self.batch < 1 or self.samples_per_ray < 1:
            raise ValueError("batch and samples_per_ray must be positive")
        if not 0.0 < self.occupancy_threshold < 1.0:
            raise ValueError("occupancy_threshold is an opacity and must lie in (0, 1)")
        if RenderMode(self.mode) is RenderMode.PILOT:
            raise ValueError("mode must be 'vfr' or 'standard'; the pilot phase is set by pilot_steps")


def lr_at(step: int, config: TrainConfig) -> float:
    """Linear warmup from lr/100 to lr, then x``decay`` at each milestone."""
    if step < config.warmup_steps:
        return config.lr * (0.01 + 0.99 * step / config.warmup_steps)
    passed = sum(step >= m * config.steps for m in config.milestones)
    return config.lr * config.decay ** passed


# -- Adam ------------------------------------------------------------------

@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0


def adam_step(params, grads, state: AdamState, lr_t, betas=(0.9, 0.999), eps=1e-15):
    """Bias-corrected Adam update in place; ``eps`` sits inside the square root."""
    g = np.asarray(grads)
    if g.shape != params.shape or state.m.shape != params.shape:
        raise ValueError(f"shape mismatch: params {params.shape}, grads {g.shape}, moments {state.m.shape}")
    if not np.isfinite(g).all():
        raise NumericError("non-finite gradient")
    b1, b2 = betas
    state.t += 1
    state.m *= b1
    state.m += (1 - b1) * g
    state.v *= b2
    state.v += (1 - b2) * g * g
    m_hat = state.m / (1 - b1 ** state.t)
    v_hat = state.v / (1 - b2 ** state.t)
    params -= (lr_t * m_hat / np.sqrt(v_hat + eps)).astype(params.dtype)


class Adam:
    """Per-parameter Adam moments keyed by parameter name."""

    def __init__(self, betas=(0.9, 0.999), eps=1e-15):
        self.betas = tuple(betas)
        self.eps = eps
        self.state: dict[str, AdamState] = {}

    def step(self, params: dict[str, ParamArray], lr_t: float):
        # check everything first so a bad gradient leaves all parameters untouched
        for name, p in params.items():
            if not np.isfinite(p.grads).all():
                raise NumericError(f"non-finite gradient in {name}; step aborted")
        for name, p in params.items():
            st = self.state.get(name)
            if st is None:
                st = self.state[name] = AdamState(np.zeros_like(p.values), np.zeros_like(p.values))
            adam_step(p.values, p.grads, st, lr_t, self.betas, self.eps)


# -- state ---------------------------------------------------------------

@dataclass
class UpdateCounter:
    count: int = 0
    first: int | None = None
    last: int | None = None

    def hit(self, step: int):
        self.count += 1
        if self.first is None:
            self.first = step
        self.last = step


@dataclass
class TrainState:
    step: int
    model: SceneModel
    occupancy: OccupancyGrid
    optimizer: Adam
    mode: RenderMode
    rng: np.random.Generator
    history: list[dict] = field(default_factory=list)
    updates: dict[str, UpdateCounter] = field(default_factory=dict)
    initial_loss: float | None = None
    high_loss_run: int = 0

    def metrics_csv(self) -> str:
        buf = io.StringIO()
        write_metrics(buf, self.history)
        return buf.getvalue()


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_metrics(stream, rows):
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(METRIC_COLUMNS)
    for row in rows:
        w.writerow([_fmt(row[c]) for c in METRIC_COLUMNS])


def build_model(aabb, grid_config=GridConfig(), net_config=NetworkConfig(), seed=0, dtype=np.float32):
    grid_seed, net_seed = np.random.SeedSequence(seed).spawn(2)
    grid = FeatureGrid(grid_config, np.random.default_rng(grid_seed), dtype)
    bundle = NetworkBundle(grid.out_dim, net_config, np.random.default_rng(net_seed), dtype)
    return SceneModel(grid, bundle, aabb)


class Trainer:
    """Stateful training driver; :meth:`run` performs the whole schedule."""

    def __init__(self, dataset: SceneDataset, config: TrainConfig = TrainConfig(),
                 grid_config: GridConfig = GridConfig(), net_config: NetworkConfig = NetworkConfig(),
                 eval_dataset: SceneDataset | None = None, model: SceneModel | None = None,
                 dtype=np.float32):
        if not dataset.frames:
            raise UsageError("dataset has no views")
        self.config = config
        self.dataset = dataset
        self.eval_dataset = eval_dataset
        self.background = np.asarray(config.background, dtype=np.float64)
        origins, dirs, colors = dataset.all_rays()
        self.origins = origins
        self.dirs = dirs
        self.colors = colors.astype(dtype)
        model = model or build_model(dataset.aabb, grid_config, net_config, config.seed, dtype)
        occ = OccupancyGrid(model.aabb, config.occupancy_resolution, config.occupancy_decay,
                            density_threshold(config.occupancy_threshold, model.aabb, config.samples_per_ray))
        run_seed = np.random.SeedSequence(config.seed).spawn(3)[2]
        first_mode = RenderMode.PILOT if config.pilot_steps > 0 else RenderMode(config.mode)
        if config.pilot_steps == 0:
            model.bundle.discard_pilot()
        self.state = TrainState(0, model, occ, Adam(config.betas, config.eps), first_mode,
                                np.random.default_rng(run_seed))

    # -- pieces of one step -------------------------------------------
    def _trainable(self) -> dict[str, ParamArray]:
        groups = self.state.model.groups()
        names = ["grid", "density"]
        if self.state.mode is RenderMode.PILOT:
            names.append("pilot")
            if self.config.pilot_trains_main:
                names.append("main")
        else:
            names.append("main")
        out = {}
        for g in names:
            for name, p in groups[g].items():
                out[name] = p
        return out

    def _handoff(self):
        st = self.state
        st.model.bundle.discard_pilot()
        for name in [n for n in st.optimizer.state if n.startswith("pilot.")]:
            del st.optimizer.state[name]
        st.mode = RenderMode(self.config.mode)

    def _maintain_occupancy(self, step: int):
        cfg = self.config
        occ = self.state.occupancy
        if step < cfg.occupancy_warmup:
            occ.mark_all()
        elif (step - cfg.occupancy_warmup) % cfg.occupancy_every == 0:
            occ.update(self.state.model.density_values, self.state.rng)

    def _check_divergence(self, loss: float, step: int):
        st = self.state
        if st.initial_loss is None:
            st.initial_loss = loss
        if loss > self.config.divergence_factor * st.initial_loss:
            st.high_loss_run += 1
        else:
            st.high_loss_run = 0
        if st.high_loss_run >= self.config.divergence_patience:
            raise DivergenceError(
                f"training diverged at step {step}: loss {loss:.4g} has exceeded "
                f"{self.config.divergence_factor:g}x the initial loss {st.initial_loss:.4g} "
                f"for {st.high_loss_run} consecutive steps (mode {st.mode.value})")

    def step(self) -> dict:
        """One optimisation step; returns loss and evaluation counts."""
        cfg = self.config
        st = self.state
        step = st.step
        if step == cfg.pilot_steps and st.mode is RenderMode.PILOT:
            self._handoff()
        self._maintain_occupancy(step)
        model = st.model
        idx = st.rng.integers(0, self.origins.shape[0], cfg.batch)
        dirs = self.dirs[idx]
        batch = march(self.origins[idx], dirs, model.aabb, cfg.samples_per_ray, True, st.rng)
        batch = filter_occupied(batch, st.occupancy)
        params = self._trainable()
        for p in model.parameters().values():
            p.zero_grad()
        tape = Tape()
        out = render_rays(model, batch, dirs.astype(model.dtype), st.mode, self.background, tape)
        loss = tape.mse_loss(out.rgb, self.colors[idx])
        tape.backward()
        lr_t = lr_at(step, cfg)
        st.optimizer.step(params, lr_t)
        for group, members in model.groups().items():
            if any(name in params for name in members):
                st.updates.setdefault(group, UpdateCounter()).hit(step)
        loss_v = float(loss.values[0])
        self._check_divergence(loss_v, step)
        st.step += 1
        return {"loss": loss_v, "lr": lr_t, "nn_evals": out.nn_eval_count, "rays": batch.n_rays,
                "samples": batch.n_samples}

    def evaluate(self, dataset: SceneDataset | None = None, views=None, mode=None):
        """Per-view (psnr, ssim) on ``dataset`` (default: the eval split)."""
        ds = dataset or self.eval_dataset or self.dataset
        views = range(len(ds.frames)) if views is None else views
        mode = mode or self.state.mode
        rows = []
        for i in views:
            img, _ = render_image(self.state.model, ds.camera(i), mode, self.background,
                                  self.config.samples_per_ray, self.state.occupancy)
            gt = ds.frames[i].image[..., :3]
            rows.append((psnr(img, gt), ssim(img, gt)))
        return rows

    def run(self, log_stream=None, eval_views=(0,)) -> TrainState:
        cfg = self.config
        st = self.state
        if log_stream is not None:
            log_stream.write(",".join(METRIC_COLUMNS) + "\n")
        while st.step < cfg.steps:
            info = self.step()
            done = st.step
            if done % cfg.log_every == 0 or done == cfg.steps:
                if not math.isfinite(info["loss"]):
                    raise NumericError(f"non-finite loss at step {done}")
                psnr_eval = float("nan")
                if self.eval_dataset is not None and eval_views:
                    psnr_eval = float(np.mean([r[0] for r in self.evaluate(views=eval_views)]))
                row = {"step": done, "loss": info["loss"], "psnr_train": psnr(info["loss"]),
                       "psnr_eval": psnr_eval, "lr": info["lr"],
                       "nn_evals_per_ray": info["nn_evals"] / max(info["rays"], 1)}
                st.history.append(row)
                if log_stream is not None:
                    csv.writer(log_stream, lineterminator="\n").writerow(
                        [_fmt(row[c]) for c in METRIC_COLUMNS])
                    log_stream.flush()
        return st


def train(dataset: SceneDataset, config: TrainConfig = TrainConfig(), grid_config=GridConfig(),
          net_config=NetworkConfig(), eval_dataset=None, log_stream=None) -> TrainState:
    return Trainer(dataset, config, grid_config, net_config, eval_dataset).run(log_stream)


def mse_loss(pred, target):
    """Mean squared error over all channels (plain arrays)."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {target.shape}")
    return float(np.mean((pred - target) ** 2))
