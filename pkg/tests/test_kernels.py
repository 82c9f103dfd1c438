"""Backend equivalence and grid-distance oracles.

Every hot kernel ships as a numba/numpy pair behind CORRIDORLAB_BACKEND.
The numpy twin is the reference semantics, so the pair must agree to float
round-off on arbitrary inputs, and grid_distance (integer arithmetic) must
be bit-identical. The small grids below were frozen from an independent
Bellman-Ford relaxation reference, worked by hand where feasible.
"""

import numpy as np
import pytest

from corridorlab import world
from corridorlab._kernels import _numpy_impl as knp
from corridorlab._kernels import backend
from corridorlab.controllers import _FIELD_RES, goal_field

try:
    from corridorlab._kernels import _numba_impl as knb

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

needs_numba = pytest.mark.skipif(not HAVE_NUMBA, reason="numba backend unavailable")


def _random_geometry(r, empty=False):
    if empty:
        return np.zeros((0, 3)), np.zeros((0, 4)), np.zeros((0, 4))
    circles = np.column_stack([r.uniform(0, 50, 6), r.uniform(0, 3, 6), r.uniform(0.1, 0.8, 6)])
    boxes = np.column_stack([r.uniform(0, 50, 5), r.uniform(0, 3, 5), r.uniform(0.1, 0.9, 5), r.uniform(0.1, 0.9, 5)])
    peds = np.column_stack([r.uniform(0, 50, 3), r.uniform(0, 3, 3), r.uniform(-1, 1, 3), r.uniform(-1, 1, 3)])
    return circles, boxes, peds


def test_backend_flag_reports_active_impl():
    assert backend() in ("numba", "numpy")


@needs_numba
def test_ray_ranges_backends_agree():
    r = np.random.default_rng(11)
    for it in range(25):
        circles, boxes, _ = _random_geometry(r, empty=it % 5 == 0)
        angles = r.uniform(-np.pi, np.pi, 72)
        angles[0] = 0.0  # wall-parallel: exercises the divide-by-zero guard
        angles[1] = np.pi
        px, py = r.uniform(0, 50), r.uniform(0.1, 2.9)
        a = knp.ray_ranges(px, py, angles, circles, boxes, 3.0, 8.0)
        b = knb.ray_ranges(px, py, angles, circles, boxes, 3.0, 8.0)
        assert np.allclose(a, b, rtol=0, atol=1e-12)
        assert (b > 0).all() and (b <= 8.0).all()


@needs_numba
def test_plant_step_backends_agree():
    r = np.random.default_rng(12)
    for _ in range(25):
        n = 16
        states = r.standard_normal((n, 7))
        acts = r.uniform(-1, 1, (n, 2))
        ext = np.column_stack([r.uniform(0.5, 1.5, (n, 4)), r.uniform(0, 0.5, n)])
        noise = r.standard_normal((n, 3)) * 0.01
        push = r.standard_normal((n, 2)) * 0.1
        a = knp.plant_step_batch(states, acts, ext, noise, push, 1 / 38)
        b = knb.plant_step_batch(states, acts, ext, noise, push, 1 / 38)
        assert np.allclose(a, b, rtol=0, atol=1e-12)


@needs_numba
def test_arc_evaluate_backends_agree():
    r = np.random.default_rng(13)
    for it in range(25):
        circles, boxes, peds = _random_geometry(r, empty=it % 5 == 0)
        cand = np.column_stack([r.uniform(0, 1, 40), r.uniform(-1.5, 1.5, 40)])
        cand[3, 1] = 0.0  # straight-line branch
        px, py, th = r.uniform(0, 50), r.uniform(0.1, 2.9), r.uniform(-np.pi, np.pi)
        ca, ea = knp.arc_evaluate(cand, px, py, th, 40, 0.05, circles, boxes, peds, 0.3, 3.0)
        cb, eb = knb.arc_evaluate(cand, px, py, th, 40, 0.05, circles, boxes, peds, 0.3, 3.0)
        assert np.allclose(ca, cb, rtol=0, atol=1e-12)
        assert np.allclose(ea, eb, rtol=0, atol=1e-12)


@needs_numba
def test_grid_distance_backends_bit_identical():
    r = np.random.default_rng(14)
    for it in range(12):
        free = (r.uniform(size=(30, 20)) < 0.7).astype(np.uint8)
        if it == 0:
            free[:] = 1
        if it == 1:
            free[:] = 0
        src = np.zeros_like(free)
        src[-1, :] = 1
        a = knp.grid_distance(free, src)
        b = knb.grid_distance(free, src)
        assert a.dtype == b.dtype == np.int64
        assert np.array_equal(a, b)


# --- grid_distance semantics against frozen hand/reference values ---------

GRID_CASES = [
    # (free, src, expected) -- expected frozen from the relaxation reference
    (
        np.ones((1, 5), np.uint8),
        [(0, 0)],
        [[0, 5, 10, 15, 20]],
    ),
    (
        np.ones((3, 3), np.uint8),
        [(0, 0)],
        [[0, 5, 10], [5, 7, 12], [10, 12, 14]],
    ),
    (
        # corner-cut forbidden: the diagonal between two blocked cells is no path
        np.array([[1, 0, 1], [0, 1, 1], [1, 1, 1]], np.uint8),
        [(0, 0)],
        [[0, -1, -1], [-1, -1, -1], [-1, -1, -1]],
    ),
    (
        # wall column isolates the far side
        np.array([[1, 0, 1], [1, 0, 1], [1, 0, 1]], np.uint8),
        [(0, 0), (1, 0), (2, 0)],
        [[0, -1, -1], [0, -1, -1], [0, -1, -1]],
    ),
    (
        # a source on a blocked cell seeds nothing
        np.array([[0, 1], [1, 1]], np.uint8),
        [(0, 0)],
        [[-1, -1], [-1, -1]],
    ),
    (
        # detour around a notch
        np.array([[1, 1, 1, 1], [1, 0, 0, 1], [1, 1, 1, 1], [1, 1, 1, 1]], np.uint8),
        [(0, 0)],
        [[0, 5, 10, 15], [5, -1, -1, 20], [10, 15, 20, 25], [15, 17, 22, 27]],
    ),
]


@pytest.mark.parametrize("free,sources,expected", GRID_CASES)
def test_grid_distance_hand_cases(free, sources, expected):
    src = np.zeros_like(free)
    for i, j in sources:
        src[i, j] = 1
    from corridorlab._kernels import grid_distance

    assert np.array_equal(grid_distance(free, src), np.array(expected, np.int64))


def test_grid_distance_matches_relaxation_on_random_grids():
    # independent O(V*E) fixpoint reference, same move set
    def reference(free, src):
        free = free.astype(bool)
        nx, ny = free.shape
        inf = 10**9
        d = np.full((nx, ny), inf, dtype=np.int64)
        d[src.astype(bool) & free] = 0
        moves = [(1, 0, 5), (-1, 0, 5), (0, 1, 5), (0, -1, 5), (1, 1, 7), (1, -1, 7), (-1, 1, 7), (-1, -1, 7)]
        changed = True
        while changed:
            changed = False
            for i in range(nx):
                for j in range(ny):
                    if not free[i, j]:
                        continue
                    for di, dj, c in moves:
                        ni, nj = i + di, j + dj
                        if not (0 <= ni < nx and 0 <= nj < ny) or not free[ni, nj]:
                            continue
                        if c == 7 and not (free[i, nj] and free[ni, j]):
                            continue
                        if d[ni, nj] + c < d[i, j]:
                            d[i, j] = d[ni, nj] + c
                            changed = True
        return np.where(free & (d < inf), d, -1)

    from corridorlab._kernels import grid_distance

    r = np.random.default_rng(15)
    for _ in range(8):
        free = (r.uniform(size=(12, 9)) < 0.65).astype(np.uint8)
        src = (r.uniform(size=(12, 9)) < 0.1).astype(np.uint8)
        assert np.array_equal(grid_distance(free, src), reference(free, src))


# --- goal_field on scenes with known geodesics -----------------------------


def test_goal_field_empty_corridor_is_linear_in_x():
    sc = world.Scene(seed=0, difficulty="easy", obstacles=[], pedestrians=[])
    field = goal_field(sc)
    # purely axial geodesic: distance = goal_x - x at every free cell
    ix = int(round(10.0 / _FIELD_RES))
    iy = int(round(1.5 / _FIELD_RES))
    assert np.isclose(field[ix, iy], sc.goal_x - 10.0, atol=1e-9)
    assert np.isclose(field[0, iy], sc.goal_x, atol=1e-9)
    assert field[-1, iy] == 0.0
    # inflation ring along the walls is blocked
    assert np.isinf(field[ix, 0])
    assert np.isinf(field[ix, -1])


def test_goal_field_blocked_pocket_reads_inf():
    # a full-height wall at x=5 with no gap: everything upstream is cut off
    wall = world.Obstacle("box", cx=5.0, cy=1.5, hx=0.3, hy=1.5)
    sc = world.Scene(seed=0, difficulty="easy", obstacles=[wall], pedestrians=[])
    field = goal_field(sc)
    iy = int(round(1.5 / _FIELD_RES))
    assert np.isinf(field[int(round(2.0 / _FIELD_RES)), iy])
    assert np.isfinite(field[int(round(8.0 / _FIELD_RES)), iy])


def test_goal_field_detour_longer_than_euclid():
    # an off-center slab forces a detour; the field must price it
    slab = world.Obstacle("box", cx=10.0, cy=1.0, hx=0.4, hy=1.0)
    sc = world.Scene(seed=0, difficulty="easy", obstacles=[slab], pedestrians=[])
    field = goal_field(sc)
    ix = int(round(4.0 / _FIELD_RES))
    iy = int(round(0.8 / _FIELD_RES))
    direct = sc.goal_x - 4.0
    assert field[ix, iy] > direct + 0.3
    # octile metric never undercuts the straight line
    free = np.isfinite(field)
    X = np.arange(field.shape[0])[:, None] * _FIELD_RES
    assert (field[free] >= (sc.goal_x - X * np.ones_like(field))[free] - 1e-9).all()
