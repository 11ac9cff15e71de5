"""Acceptance criteria, one test per criterion.

Each test appends a PASS/FAIL line to the session summary (printed at the end
of the pytest run) and asserts at the stated tolerance. Criteria 5, 6 and 9
train on the 32-view toy sphere, so a full run of this module takes a while.
"""

import time

import numpy as np
import pytest

from vfr.autodiff import ParamArray, Tape, grad_check
from vfr.cli import bench, main
from vfr.config import RunConfig
from vfr.errors import DivergenceError
from vfr.nn import NetworkConfig, sh_feature_encode
from vfr.render import RenderMode, compute_weights, render_fields, render_image, render_rays
from vfr.sampling import Camera, OccupancyGrid, filter_occupied, generate_rays, march
from vfr.scene import (blob_scene, generate_toy_dataset, load_nerf_synthetic, look_at, oracle_render,
                       save_nerf_synthetic, sphere_scene)
from vfr.sh import eval_sh, sh_count
from vfr.train import Trainer

from conftest import ACCEPTANCE_LINES, SMALL_GRID, UNIT_BOX, make_model
from test_render import linear_equivalence_trial, random_rays

TOY_VIEWS, TOY_TEST_VIEWS, TOY_RES = 32, 8, 64


def report(number, name, ok, detail, seconds):
    line = f"criterion {number:>2} [{'PASS' if ok else 'FAIL'}] {name}: {detail} ({seconds:.1f} s)"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


# -- shared toy scene and runs ---------------------------------------------

@pytest.fixture(scope="module")
def toy_dir(request):
    """32 train / 8 test views of the Lambertian sphere, 64x64, oracle rendered.

    Cached in the pytest cache directory; the generator is deterministic, so
    a stamp file guards against stale or partial output.
    """
    root = request.config.cache.mkdir("vfr-toy-sphere-32x64")
    stamp = root / "complete"
    if not stamp.is_file():
        scene = sphere_scene()
        train = generate_toy_dataset(scene, TOY_VIEWS, TOY_RES, seed=0)
        test = generate_toy_dataset(scene, TOY_TEST_VIEWS, TOY_RES, seed=1)
        save_nerf_synthetic(root, {"train": train, "val": test, "test": test})
        stamp.write_text("ok\n")
    return root


def _train_toy(root, mode):
    cfg = RunConfig(mode=mode)
    t0 = time.perf_counter()
    tr = Trainer(load_nerf_synthetic(root, "train"), cfg.train_config(), cfg.grid_config(),
                 cfg.net_config(), eval_dataset=load_nerf_synthetic(root, "test"))
    tr.run()
    rows = tr.evaluate()
    return {"trainer": tr, "psnr": float(np.mean([r[0] for r in rows])),
            "ssim": float(np.mean([r[1] for r in rows])), "seconds": time.perf_counter() - t0}


@pytest.fixture(scope="module")
def vfr_run(toy_dir):
    return _train_toy(toy_dir, "vfr")


@pytest.fixture(scope="module")
def standard_run(toy_dir):
    return _train_toy(toy_dir, "standard")


# -- 1 ---------------------------------------------------------------------

def test_criterion_01_linear_equivalence():
    t0 = time.perf_counter()
    worst = max(linear_equivalence_trial(seed) for seed in range(100))
    dt = time.perf_counter() - t0
    ok = worst < 1e-6 and dt < 10
    report(1, "linear-mode VFR == standard", ok, f"max rel err {worst:.2e} over 100 scenes (< 1e-6)", dt)
    assert worst < 1e-6
    assert dt < 10


# -- 2 ---------------------------------------------------------------------

def test_criterion_02_weight_conservation():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    n_arrays = 10 ** 5
    counts = rng.integers(1, 65, n_arrays)
    offsets = np.concatenate(([0], np.cumsum(counts))).astype(np.int64)
    sigma = 10.0 ** rng.uniform(-3, 3, offsets[-1])
    delta = 10.0 ** rng.uniform(-4, -1, offsets[-1])
    w, t_final = compute_weights(sigma, delta, offsets)
    total = np.add.reduceat(w, offsets[:-1]) + t_final
    worst = float(np.abs(total - 1.0).max())
    dt = time.perf_counter() - t0
    report(2, "sum(w) + T_final == 1", worst < 1e-6 and dt < 5,
           f"max |err| {worst:.2e} over {n_arrays} arrays (< 1e-6)", dt)
    assert worst < 1e-6
    assert dt < 5


# -- 3 ---------------------------------------------------------------------

GRAD_NET = NetworkConfig(spatial_layers=2, directional_layers=2, width=8, bottleneck_dim=4, sh_degree=2,
                         sh_features=2, density_hidden=8, pilot_width=8, pilot_layers=2)


def test_criterion_03_gradient_suite():
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    worst = 0.0
    probes = {}
    for mode in (RenderMode.VFR, RenderMode.STANDARD, RenderMode.PILOT):
        model = make_model(11, SMALL_GRID, GRAD_NET, np.float64, init_scale=0.5)
        o, d = random_rays(rng, 8)
        batch = march(o, d, UNIT_BOX, 16, True, rng)
        target = rng.random((8, 3))

        def loss(tape):
            return tape.mse_loss(render_rays(model, batch, d, mode, np.ones(3), tape).rgb, target)

        _, idx, _ = model.grid.encode(model.normalize(batch.positions))
        touched = np.unique(idx.reshape(-1))
        table = model.grid.table
        cols = table.shape[1]
        entries = rng.choice(touched, 20, replace=False)
        flat = (entries[:, None] * cols + np.arange(cols)).reshape(-1)
        worst = max(worst, grad_check(loss, table, h=1e-4, indices=flat))
        n = flat.size
        groups = model.groups()
        for group in ("density", "pilot" if mode is RenderMode.PILOT else "main"):
            for p in groups[group].values():
                pick = rng.choice(p.size, min(p.size, 8), replace=False)
                worst = max(worst, grad_check(loss, p, h=1e-4, indices=pick))
                n += pick.size
        probes[mode.value] = n
    dt = time.perf_counter() - t0
    ok = worst < 1e-4 and min(probes.values()) >= 100 and dt < 120
    report(3, "end-to-end gradients vs central differences", ok,
           f"max rel err {worst:.2e} (< 1e-4), probes per mode {probes}", dt)
    assert min(probes.values()) >= 100
    assert worst < 1e-4
    assert dt < 120


# -- 4 ---------------------------------------------------------------------

def test_criterion_04_eval_counts():
    t0 = time.perf_counter()
    model = make_model(4, init_scale=1.0, dtype=np.float32)
    # occupancy carved from the analytic sphere so that filtering really drops samples
    occ = OccupancyGrid(UNIT_BOX, 32, 0.95, 0.01)
    occ.update(sphere_scene().density_fn, np.random.default_rng(4))
    cam = Camera.from_fov(look_at([0.3, -1.3, 0.4]), 0.8, 64, 64)
    bg = np.ones(3)

    bundle = model.bundle
    bundle.reset_counters()
    _, vfr_stats = render_image(model, cam, "vfr", bg, 64, occ, early_stop=False)
    vfr_forwards = bundle.main_evals
    bundle.reset_counters()
    _, std_stats = render_image(model, cam, "standard", bg, 64, occ, early_stop=False)
    std_forwards = bundle.main_evals

    o, d = generate_rays(cam)
    retained = filter_occupied(march(o, d, model.aabb, 64), occ).n_samples
    dt = time.perf_counter() - t0
    ok = vfr_forwards == 64 * 64 and std_forwards == retained and 0 < retained < 64 ** 3 and dt < 30
    report(4, "network evaluations per pixel", ok,
           f"VFR {vfr_forwards / 4096:.3f}/pixel, standard {std_forwards / 4096:.2f}/pixel vs "
           f"{retained / 4096:.2f} retained samples/pixel", dt)
    assert vfr_forwards == 64 * 64 == vfr_stats.nn_evals
    assert std_forwards == retained == std_stats.nn_evals
    assert 0 < retained < 64 ** 3
    assert dt < 30


# -- 5 ---------------------------------------------------------------------

def test_criterion_05_desk_convergence(vfr_run, standard_run):
    gap = standard_run["psnr"] - vfr_run["psnr"]
    seconds = vfr_run["seconds"] + standard_run["seconds"]
    ok = vfr_run["psnr"] >= 28.0 and abs(gap) <= 1.5
    report(5, "desk-scale convergence", ok,
           f"VFR {vfr_run['psnr']:.2f} dB (>= 28), standard {standard_run['psnr']:.2f} dB, "
           f"gap {gap:+.2f} dB (within 1.5); SSIM {vfr_run['ssim']:.4f} / {standard_run['ssim']:.4f}; "
           f"train+eval {vfr_run['seconds']:.0f} s / {standard_run['seconds']:.0f} s", seconds)
    assert vfr_run["psnr"] >= 28.0
    assert abs(gap) <= 1.5


# -- 6 ---------------------------------------------------------------------

def test_criterion_06_throughput_direction(toy_dir):
    t0 = time.perf_counter()
    ds = load_nerf_synthetic(toy_dir, "train")
    rows = bench(ds, RunConfig(), ["standard", "vfr"], [(6, 256)], steps=2, batch=256, render=False)
    times = {r["mode"]: r["step_time_s"] for r in rows}
    evals = {r["mode"]: r["nn_forwards_per_ray"] for r in rows}
    ratio = times["vfr"] / times["standard"]
    dt = time.perf_counter() - t0
    report(6, "VFR step faster than standard at 6x256", ratio < 1.0,
           f"step time vfr/standard = {ratio:.3f} (< 1.0); {times['vfr']:.3f} s vs {times['standard']:.3f} s; "
           f"forwards/ray {evals['vfr']:.1f} vs {evals['standard']:.1f}", dt)
    assert evals["vfr"] == 1.0
    assert ratio < 1.0


# -- 7 ---------------------------------------------------------------------

def test_criterion_07_oracle_agreement():
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    worst = 0.0
    for scene in (blob_scene(), blob_scene(peak=60.0, width=0.1)):
        o, d = random_rays(rng, 300)
        ref = oracle_render(scene, o, d, 4096)
        ours = render_fields(scene.density_fn, scene.color_fn, march(o, d, scene.aabb, 256), d,
                             scene.background)
        worst = max(worst, float(np.abs(ours - ref).max()))
    dt = time.perf_counter() - t0
    report(7, "standard render of analytic fields vs quadrature oracle", worst < 1e-3,
           f"max per-channel err {worst:.2e} at 256 samples/ray (< 1e-3)", dt)
    assert worst < 1e-3


# -- 8 ---------------------------------------------------------------------

def test_criterion_08_sh():
    t0 = time.perf_counter()
    rng = np.random.default_rng(8)
    d = rng.standard_normal((10 ** 6, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    y = eval_sh(4, d)
    gram = 4 * np.pi * (y.T @ y) / d.shape[0]
    ortho = float(np.abs(gram - np.eye(sh_count(4))).max())
    exact = True
    for degree in range(5):
        sh = eval_sh(degree, d[:256])
        out = sh_feature_encode(Tape(enabled=False), sh, ParamArray(np.ones(sh.shape + (1,))))
        exact &= bool(np.array_equal(out.values, sh))
    dt = time.perf_counter() - t0
    report(8, "SH orthonormality and SHFE reduction", ortho < 0.01 and exact,
           f"max |gram - I| {ortho:.4f} (< 0.01), k=1 f=1 bit-exact: {exact}", dt)
    assert ortho < 0.01
    assert exact


# -- 9 ---------------------------------------------------------------------

def test_criterion_09_pilot_schedule(vfr_run, toy_dir):
    t0 = time.perf_counter()
    up = vfr_run["trainer"].state.updates
    pilot, main_ = up["pilot"], up["main"]
    schedule_ok = (pilot.first == 0 and pilot.last == 299 and pilot.count == 300
                   and main_.first == 300 and main_.last == 1999 and main_.count == 1700)
    converged = vfr_run["psnr"] >= 28.0

    cfg = RunConfig(pilot_steps=0, steps=200)
    tr = Trainer(load_nerf_synthetic(toy_dir, "train"), cfg.train_config(), cfg.grid_config(),
                 cfg.net_config())
    try:
        tr.run()
        no_pilot = f"ran {tr.state.step} steps, final loss {tr.state.history[-1]['loss']:.4g}"
    except DivergenceError as exc:
        no_pilot = f"aborted by the divergence detector ({exc})"
    no_pilot_ok = "pilot" not in tr.state.updates and tr.state.updates["main"].first == 0
    dt = time.perf_counter() - t0
    ok = schedule_ok and converged and no_pilot_ok
    report(9, "pilot schedule", ok,
           f"pilot steps {pilot.first}..{pilot.last} ({pilot.count}), main steps {main_.first}..{main_.last} "
           f"({main_.count}); held-out {vfr_run['psnr']:.2f} dB; pilot_steps=0 {no_pilot}", dt)
    assert schedule_ok
    assert converged
    assert no_pilot_ok


# -- 10 --------------------------------------------------------------------

def test_criterion_10_reproducibility(tiny_scene_dir, tmp_path, capsys):
    t0 = time.perf_counter()
    args = ["--steps", "40", "--pilot-steps", "10", "--seed", "5",
            "--set", "occupancy_warmup=16", "--set", "occupancy_every=8", "--set", "occupancy_resolution=16",
            "--set", "batch_rays=128", "--set", "samples_per_ray=24", "--set", "log_every=5",
            "--set", "deterministic=true"]
    outs = []
    for run in ("a", "b"):
        out = tmp_path / f"{run}.ckpt"
        assert main(["train", "--scene", str(tiny_scene_dir), "--out", str(out), *args]) == 0
        outs.append((out.read_bytes(), out.with_suffix(".csv").read_bytes()))
    same_ckpt = outs[0][0] == outs[1][0]
    same_log = outs[0][1] == outs[1][1]
    dt = time.perf_counter() - t0
    report(10, "bit-identical reruns", same_ckpt and same_log,
           f"checkpoints identical: {same_ckpt} ({len(outs[0][0])} bytes), metric logs identical: {same_log}", dt)
    assert same_ckpt
    assert same_log
