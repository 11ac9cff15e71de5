"""``vfr`` command line: make-toy, train, render, eval, bench.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numeric
divergence.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import io
import sys
import time
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import config as run_config
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .errors import ConfigError, DataError, DivergenceError, DomainError, NumericError, UsageError
from .metrics import psnr, ssim
from .render import RenderMode, render_image
from .sampling import Camera
from .scene import generate_toy_dataset, load_nerf_synthetic, png_write, save_nerf_synthetic, sphere_scene
from .train import Trainer

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _load_config(args, cli_keys=("steps", "mode", "seed", "pilot_steps")) -> run_config.RunConfig:
    cfg = run_config.load(args.config) if getattr(args, "config", None) else run_config.RunConfig()
    overrides = {}
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        overrides.update(run_config.parse_overrides(item, "--set"))
    for key in cli_keys:
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    return cfg.replace(**overrides) if overrides else cfg


def _background(cfg):
    return np.asarray(cfg.background, dtype=np.float64)


# -- make-toy ---------------------------------------------------------------

def cmd_make_toy(args):
    scene = sphere_scene(specular=args.specular)
    train = generate_toy_dataset(scene, args.views, args.resolution, args.seed, quadrature=args.quadrature)
    test = generate_toy_dataset(scene, args.test_views, args.resolution, args.seed + 1,
                                quadrature=args.quadrature)
    save_nerf_synthetic(args.out, {"train": train, "val": test, "test": test})
    print(f"wrote {args.views} train / {args.test_views} test views to {args.out}")
    return EXIT_OK


# -- train ------------------------------------------------------------------

def cmd_train(args):
    cfg = _load_config(args)
    if args.dump_config:
        sys.stdout.write(cfg.dumps())
        return EXIT_OK
    if not args.scene or not args.out:
        raise UsageError("train needs --scene and --out")
    train_set = load_nerf_synthetic(args.scene, "train", cfg.background)
    eval_set = None
    if cfg.eval_views > 0 and (Path(args.scene) / "transforms_test.json").is_file():
        eval_set = load_nerf_synthetic(args.scene, "test", cfg.background)
    out = Path(args.out)
    metrics_path = Path(args.metrics) if args.metrics else out.with_suffix(".csv")
    trainer = Trainer(train_set, cfg.train_config(), cfg.grid_config(), cfg.net_config(), eval_set)
    views = tuple(range(min(cfg.eval_views, len(eval_set.frames)))) if eval_set else ()
    # one BLAS thread keeps every reduction order fixed between runs
    pin = threadpool_limits(limits=1) if cfg.deterministic else contextlib.nullcontext()
    with pin, open(metrics_path, "w") as log:
        state = trainer.run(log, views)
    meta = {"scene": str(Path(args.scene).resolve()), "camera_angle_x": train_set.camera_angle_x,
            "width": train_set.width, "height": train_set.height, "mode": state.mode.value}
    save_checkpoint(out, Checkpoint.from_state(state.model, state.occupancy, cfg, state.step, meta))
    last = state.history[-1] if state.history else {}
    print(f"trained {state.step} steps ({state.mode.value}); final loss {last.get('loss', float('nan')):.5g}; "
          f"checkpoint {out}; metrics {metrics_path}")
    return EXIT_OK


# -- render -----------------------------------------------------------------

def _read_pose_file(path):
    try:
        vals = np.loadtxt(path, dtype=np.float64).reshape(-1)
    except (OSError, ValueError) as exc:
        raise DataError(f"{path}: cannot read pose matrix: {exc}") from exc
    if vals.size not in (12, 16):
        raise DataError(f"{path}: expected a 3x4 or 4x4 matrix, got {vals.size} numbers")
    pose = np.eye(4)
    pose[: vals.size // 4] = vals.reshape(-1, 4)
    return pose


def cmd_render(args):
    ckpt = load_checkpoint(args.checkpoint)
    cfg = ckpt.config
    model = ckpt.build_model()
    occ = ckpt.build_occupancy()
    mode = RenderMode(args.mode or ckpt.meta.get("mode", cfg.mode))
    gt = None
    if args.pose.lstrip("-").isdigit():
        scene = args.scene or ckpt.meta.get("scene")
        if not scene:
            raise UsageError("an index pose needs --scene (checkpoint records none)")
        ds = load_nerf_synthetic(scene, args.split, cfg.background)
        idx = int(args.pose)
        if not 0 <= idx < len(ds.frames):
            raise UsageError(f"pose index {idx} out of range for {len(ds.frames)} {args.split} views")
        camera = ds.camera(idx)
        gt = ds.frames[idx].image
    else:
        try:
            camera = Camera.from_fov(_read_pose_file(args.pose), float(ckpt.meta["camera_angle_x"]),
                                     int(args.width or ckpt.meta["width"]),
                                     int(args.height or ckpt.meta["height"]))
        except KeyError as exc:
            raise UsageError(f"checkpoint lacks intrinsics ({exc}); pass an index pose") from exc
    image, stats = render_image(model, camera, mode, _background(cfg), cfg.samples_per_ray, occ)
    png_write(args.out, image)
    msg = f"wrote {args.out} ({mode.value}, {stats.mean_evals_per_pixel:.2f} network evals/pixel)"
    if gt is not None:
        msg += f"; PSNR {psnr(image, gt):.2f} dB"
    print(msg)
    return EXIT_OK


# -- eval -------------------------------------------------------------------

def evaluate_checkpoint(ckpt: Checkpoint, scene, split="test", mode=None):
    cfg = ckpt.config
    model = ckpt.build_model()
    occ = ckpt.build_occupancy()
    mode = RenderMode(mode or ckpt.meta.get("mode", cfg.mode))
    ds = load_nerf_synthetic(scene, split, cfg.background)
    rows = []
    for i in range(len(ds.frames)):
        img, _ = render_image(model, ds.camera(i), mode, _background(cfg), cfg.samples_per_ray, occ)
        gt = ds.frames[i].image
        rows.append({"view": i, "psnr": psnr(img, gt), "ssim": ssim(img, gt)})
    return rows


def format_eval(rows):
    mean_psnr = float(np.mean([r["psnr"] for r in rows]))
    mean_ssim = float(np.mean([r["ssim"] for r in rows]))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["view", "psnr", "ssim"])
    for r in rows:
        w.writerow([r["view"], f"{r['psnr']:.4f}", f"{r['ssim']:.5f}"])
    w.writerow(["mean", f"{mean_psnr:.4f}", f"{mean_ssim:.5f}"])
    table = ["| view | PSNR (dB) | SSIM |", "|---|---|---|"]
    table += [f"| {r['view']} | {r['psnr']:.2f} | {r['ssim']:.4f} |" for r in rows]
    table.append(f"| mean | {mean_psnr:.2f} | {mean_ssim:.4f} |")
    return buf.getvalue(), "\n".join(table) + "\n", mean_psnr, mean_ssim


def cmd_eval(args):
    ckpt = load_checkpoint(args.checkpoint)
    rows = evaluate_checkpoint(ckpt, args.scene, args.split, args.mode)
    csv_text, table, _, _ = format_eval(rows)
    if args.csv:
        Path(args.csv).write_text(csv_text)
    print(table, end="")
    return EXIT_OK


# -- bench ------------------------------------------------------------------

def parse_mlp_size(text: str):
    try:
        depth, width = (int(x) for x in text.lower().split("x"))
    except ValueError as exc:
        raise UsageError(f"MLP size must look like 6x256, got {text!r}") from exc
    if depth < 3 or width < 1:
        raise UsageError(f"MLP size {text!r}: need at least 3 layers (2 spatial + 1 directional)")
    return depth, width


def bench(dataset, cfg: run_config.RunConfig, modes, sizes, steps=3, batch=None, render=True):
    """Time training steps per (mode, MLP size) at identical sample counts."""
    rows = []
    for depth, width in sizes:
        for mode in modes:
            c = cfg.replace(mode=mode, pilot_steps=0, spatial_layers=2, directional_layers=depth - 2,
                            mlp_width=width, bottleneck_dim=width, batch_rays=batch or cfg.batch_rays,
                            steps=steps + 2, occupancy_warmup=steps + 2)
            trainer = Trainer(dataset, c.train_config(), c.grid_config(), c.net_config())
            trainer.step()  # JIT warm-up, excluded from timing
            evals = rays = samples = 0
            t0 = time.perf_counter()
            for _ in range(steps):
                info = trainer.step()
                evals += info["nn_evals"]
                rays += info["rays"]
                samples += info["samples"]
            step_time = (time.perf_counter() - t0) / steps
            rps = float("nan")
            if render:
                t0 = time.perf_counter()
                render_image(trainer.state.model, dataset.camera(0), mode, _background(c), c.samples_per_ray,
                             None, early_stop=False)
                rps = 1.0 / (time.perf_counter() - t0)
            rows.append({"mode": mode, "mlp": f"{depth}x{width}", "step_time_s": step_time,
                         "nn_forwards_per_ray": evals / rays, "samples_per_ray": samples / rays,
                         "renders_per_s": rps})
    return rows


BENCH_COLUMNS = ("mode", "mlp", "step_time_s", "nn_forwards_per_ray", "samples_per_ray", "renders_per_s")


def format_bench(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(BENCH_COLUMNS)
    for r in rows:
        w.writerow([r[c] if isinstance(r[c], str) else f"{r[c]:.6g}" for c in BENCH_COLUMNS])
    md = ["| " + " | ".join(BENCH_COLUMNS) + " |", "|" + "---|" * len(BENCH_COLUMNS)]
    for r in rows:
        md.append("| " + " | ".join(r[c] if isinstance(r[c], str) else f"{r[c]:.4g}" for c in BENCH_COLUMNS)
                  + " |")
    return buf.getvalue(), "\n".join(md) + "\n"


def cmd_bench(args):
    cfg = _load_config(args, cli_keys=())
    ds = load_nerf_synthetic(args.scene, "train", cfg.background)
    modes = [RenderMode(m.strip()).value for m in args.modes.split(",") if m.strip()]
    sizes = [parse_mlp_size(s.strip()) for s in args.mlp_sizes.split(",") if s.strip()]
    rows = bench(ds, cfg, modes, sizes, args.steps, args.batch, not args.no_render)
    csv_text, md = format_bench(rows)
    if args.csv:
        Path(args.csv).write_text(csv_text)
    print(md, end="")
    return EXIT_OK


# -- entry point ------------------------------------------------------------

def build_parser():
    p = _Parser(prog="vfr", description="Volume feature rendering for hash-grid radiance fields.")
    p.add_argument("--threads", type=int, default=None,
                   help="cap BLAS/numba threads (1 gives the bit-reproducible path)")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    mk = sub.add_parser("make-toy", help="render the analytic sphere into a NeRF-synthetic folder")
    mk.add_argument("--out", required=True)
    mk.add_argument("--views", type=int, default=32)
    mk.add_argument("--test-views", type=int, default=8)
    mk.add_argument("--resolution", type=int, default=64)
    mk.add_argument("--seed", type=int, default=0)
    mk.add_argument("--specular", type=float, default=0.0)
    mk.add_argument("--quadrature", type=int, default=4096)
    mk.set_defaults(func=cmd_make_toy)

    tr = sub.add_parser("train", help="train a scene model")
    tr.add_argument("--scene")
    tr.add_argument("--config")
    tr.add_argument("--out", help="checkpoint path; metrics go next to it as .csv")
    tr.add_argument("--metrics")
    tr.add_argument("--steps", type=int)
    tr.add_argument("--mode", choices=["standard", "vfr"])
    tr.add_argument("--seed", type=int)
    tr.add_argument("--pilot-steps", "--pilot_steps", dest="pilot_steps", type=int)
    tr.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
    tr.add_argument("--dump-config", action="store_true", help="print the resolved config and exit")
    tr.set_defaults(func=cmd_train)

    rd = sub.add_parser("render", help="render one view from a checkpoint")
    rd.add_argument("--checkpoint", required=True)
    rd.add_argument("--pose", required=True, help="dataset view index or a 4x4 matrix text file")
    rd.add_argument("--out", required=True)
    rd.add_argument("--mode", choices=["standard", "vfr"])
    rd.add_argument("--scene")
    rd.add_argument("--split", default="test")
    rd.add_argument("--width", type=int)
    rd.add_argument("--height", type=int)
    rd.set_defaults(func=cmd_render)

    ev = sub.add_parser("eval", help="PSNR/SSIM of a checkpoint on a dataset split")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--scene", required=True)
    ev.add_argument("--split", default="test")
    ev.add_argument("--mode", choices=["standard", "vfr"])
    ev.add_argument("--csv")
    ev.set_defaults(func=cmd_eval)

    be = sub.add_parser("bench", help="training-step timing per mode and MLP size")
    be.add_argument("--scene", required=True)
    be.add_argument("--config")
    be.add_argument("--modes", default="standard,vfr")
    be.add_argument("--mlp-sizes", default="4x64,6x256")
    be.add_argument("--steps", type=int, default=3)
    be.add_argument("--batch", type=int)
    be.add_argument("--set", action="append", metavar="KEY=VALUE")
    be.add_argument("--csv")
    be.add_argument("--no-render", action="store_true")
    be.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.threads is not None:
            limiter = threadpool_limits(limits=args.threads)
        else:
            limiter = contextlib.nullcontext()
        with limiter:
            return args.func(args)
    except (ConfigError, UsageError, DomainError) as exc:
        print(f"vfr: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"vfr: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (DivergenceError, NumericError) as exc:
        print(f"vfr: diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
