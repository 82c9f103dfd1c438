"""Timing comparison of the numba and numpy kernel twins.

Runs each hot kernel on a workload shaped like real simulator traffic and
prints per-call times for both backends plus the speedup. The numba column
excludes JIT compilation (one warmup call per kernel). Run from the repo
root:

    python3 benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import time

import numpy as np

from corridorlab import world
from corridorlab._kernels import _numpy_impl as knp

try:
    from corridorlab._kernels import _numba_impl as knb
except ImportError:
    knb = None


def _timeit(fn, repeat):
    fn()  # warmup (JIT compile for the numba twin)
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn()
    return (time.perf_counter() - t0) / repeat


def _workloads():
    sc = world.generate_scene(seed=7, difficulty="medium")
    circles, boxes = sc.circle_arr, sc.box_arr
    peds = sc.ped_arr()
    angles = np.linspace(-np.pi / 2, np.pi / 2, 72)

    states = np.random.default_rng(0).standard_normal((16, 7))
    acts = np.random.default_rng(1).uniform(-1, 1, (16, 2))
    ext = np.ones((16, 5))
    ext[:, 4] = 0.0
    noise = np.zeros((16, 3))
    push = np.zeros((16, 2))

    vv, ww = np.meshgrid(np.linspace(0, 1, 11), np.linspace(-1.5, 1.5, 11))
    cand = np.column_stack([vv.ravel(), ww.ravel()])

    nx = int(round(sc.goal_x / 0.05)) + 1
    ny = int(round(sc.corridor_width / 0.05)) + 1
    free = np.ones((nx, ny), np.uint8)
    free[:, 0] = free[:, -1] = 0
    free[nx // 2, : ny // 2] = 0  # a slab so the search actually detours
    src = np.zeros_like(free)
    src[-1, :] = 1

    return [
        ("ray_ranges (72 beams)", lambda k: k.ray_ranges(10.0, 1.5, angles, circles, boxes, 3.0, 8.0)),
        ("plant_step_batch (16)", lambda k: k.plant_step_batch(states, acts, ext, noise, push, 1 / 38)),
        ("arc_evaluate (121x40)", lambda k: k.arc_evaluate(cand, 10.0, 1.5, 0.1, 40, 0.05, circles, boxes, peds, 0.3, 3.0)),
        (f"grid_distance ({nx}x{ny})", lambda k: k.grid_distance(free, src)),
    ]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=200, help="calls per measurement")
    args = ap.parse_args()

    rows = []
    for name, call in _workloads():
        rep = max(1, args.repeat // 20) if "grid" in name else args.repeat
        t_np = _timeit(lambda: call(knp), rep)
        if knb is not None:
            t_nb = _timeit(lambda: call(knb), rep)
            rows.append((name, t_np, t_nb, t_np / t_nb))
        else:
            rows.append((name, t_np, None, None))

    print(f"{'kernel':<26} {'numpy':>12} {'numba':>12} {'speedup':>9}")
    for name, t_np, t_nb, ratio in rows:
        if t_nb is None:
            print(f"{name:<26} {t_np * 1e6:>10.1f}us {'n/a':>12} {'n/a':>9}")
        else:
            print(f"{name:<26} {t_np * 1e6:>10.1f}us {t_nb * 1e6:>10.1f}us {ratio:>8.1f}x")


if __name__ == "__main__":
    main()
