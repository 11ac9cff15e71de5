"""Time the numba kernels against the pure-numpy fallback.

    python3 benchmarks/bench_kernels.py [--points 65536] [--repeat 5]

Both backends are imported side by side, so ``VFR_KERNELS`` does not matter
here. Outputs are cross-checked before timing.
"""

import argparse
import time

import numpy as np

from vfr.hashgrid import FeatureGrid, GridConfig
from vfr.kernels import backend


def best_of(fn, repeat):
    fn()  # compile / warm caches
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--points", type=int, default=1 << 16)
    ap.add_argument("--rays", type=int, default=1024)
    ap.add_argument("--samples", type=int, default=64)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(0)
    grid = FeatureGrid(GridConfig(), rng, np.float32)
    pts = rng.random((args.points, 3))
    table = grid.table.values
    enc_args = (pts, table, grid.offsets, grid.resolutions, grid.hashed, grid.config.table_size)

    n = args.rays * args.samples
    offsets = np.arange(0, n + 1, args.samples, dtype=np.int64)
    sigma = rng.exponential(5.0, n)
    delta = np.full(n, 1.0 / args.samples)
    x = rng.standard_normal((args.points, 64)).astype(np.float32)

    nb, npy = backend("numba"), backend("numpy")
    f_nb, idx, wts = nb.grid_encode(*enc_args)
    f_np, _, _ = npy.grid_encode(*enc_args)
    np.testing.assert_allclose(f_nb, f_np, rtol=1e-5, atol=1e-7)
    np.testing.assert_allclose(nb.volume_weights(sigma, delta, offsets)[0],
                               npy.volume_weights(sigma, delta, offsets)[0], atol=1e-12)
    grad = rng.standard_normal(f_nb.shape).astype(np.float32)

    cases = {
        "grid_encode": lambda k: k.grid_encode(*enc_args),
        "grid_scatter": lambda k: k.grid_scatter(grad, idx, wts, np.zeros_like(table)),
        "volume_weights": lambda k: k.volume_weights(sigma, delta, offsets),
        "gelu": lambda k: k.gelu(x),
    }
    print(f"{'kernel':<16}{'numba ms':>10}{'numpy ms':>10}{'speedup':>9}")
    for name, call in cases.items():
        t_nb = best_of(lambda: call(nb), args.repeat)
        t_np = best_of(lambda: call(npy), args.repeat)
        print(f"{name:<16}{1e3 * t_nb:>10.2f}{1e3 * t_np:>10.2f}{t_np / t_nb:>8.1f}x")


if __name__ == "__main__":
    main()
