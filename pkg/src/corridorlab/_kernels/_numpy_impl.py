"""Pure-numpy kernel implementations (reference semantics for the numba twins)."""

from __future__ import annotations

import heapq

import numpy as np

_EPS = 1e-9


def ray_ranges(px, py, angles, circles, boxes, width, max_range):
    """Distance along each beam to the nearest wall/circle/box, clipped to max_range.

    angles are absolute world angles, shape (R,). circles is (M, 3) rows of
    (cx, cy, r); boxes is (B, 4) rows of (cx, cy, hx, hy). Side walls are the
    lines y = 0 and y = width; corridor ends are open. Returns (R,) float64
    in (0, max_range].
    """
    angles = np.asarray(angles, dtype=np.float64)
    dx = np.cos(angles)
    dy = np.sin(angles)
    t = np.full(angles.shape, np.inf)

    with np.errstate(divide="ignore", invalid="ignore"):
        for wy in (0.0, width):
            tw = (wy - py) / dy
            tw = np.where(np.isfinite(tw) & (tw > _EPS), tw, np.inf)
            t = np.minimum(t, tw)

    for k in range(circles.shape[0]):
        cx, cy, r = circles[k, 0], circles[k, 1], circles[k, 2]
        ox = cx - px
        oy = cy - py
        b = dx * ox + dy * oy
        c = ox * ox + oy * oy - r * r
        disc = b * b - c
        hit = disc >= 0.0
        sq = np.sqrt(np.maximum(disc, 0.0))
        t0 = b - sq
        t1 = b + sq
        tc = np.where(t0 > _EPS, t0, np.where(t1 > _EPS, t1, np.inf))
        tc = np.where(hit, tc, np.inf)
        t = np.minimum(t, tc)

    with np.errstate(divide="ignore", invalid="ignore"):
        for k in range(boxes.shape[0]):
            cx, cy, hx, hy = boxes[k, 0], boxes[k, 1], boxes[k, 2], boxes[k, 3]
            tn, tf = _slab(px, dx, cx - hx, cx + hx)
            tn2, tf2 = _slab(py, dy, cy - hy, cy + hy)
            tnear = np.maximum(tn, tn2)
            tfar = np.minimum(tf, tf2)
            hit = (tnear <= tfar) & (tfar > _EPS)
            tb = np.where(tnear > _EPS, tnear, tfar)
            tb = np.where(hit, tb, np.inf)
            t = np.minimum(t, tb)

    return np.clip(t, _EPS, max_range)


def _slab(p, d, lo, hi):
    """Entry/exit ray parameters for one axis slab [lo, hi]."""
    inv = 1.0 / d
    t1 = (lo - p) * inv
    t2 = (hi - p) * inv
    tn = np.minimum(t1, t2)
    tf = np.maximum(t1, t2)
    inside = (p >= lo) & (p <= hi)
    degenerate = np.abs(d) < 1e-300
    tn = np.where(degenerate, np.where(inside, -np.inf, np.inf), tn)
    tf = np.where(degenerate, np.where(inside, np.inf, -np.inf), tf)
    return tn, tf


def plant_step_batch(states, actions, ext, noise, push, dt):
    """One integration step for N independent plants.

    states: (N, 7) columns (x, y, theta, v, omega, v_lat, instability),
    updated semi-implicitly: velocities first, then heading with the new
    omega, then position with the new heading and velocities. actions are
    the (already latency-delayed) efforts (N, 2); ext is (N, 5) columns
    (gain_v, gain_w, damp_v, damp_w, slip_coeff); noise is (N, 3) per-tick
    additive velocity noise; push is (N, 2) impulse kicks applied to
    (v, v_lat) after integration. Returns a new (N, 7) array.
    """
    s = np.asarray(states, dtype=np.float64)
    x, y, th = s[:, 0], s[:, 1], s[:, 2]
    v, w, vlat, inst = s[:, 3], s[:, 4], s[:, 5], s[:, 6]
    af = actions[:, 0]
    at = actions[:, 1]
    gv, gw, dv_, dw_, slip = ext[:, 0], ext[:, 1], ext[:, 2], ext[:, 3], ext[:, 4]

    dv = (2.0 * gv * af - dv_ * v) * dt + noise[:, 0]
    dw = (4.0 * gw * at - dw_ * w) * dt + noise[:, 1]
    dlat = (slip * np.abs(w) * v - 2.0 * vlat) * dt + noise[:, 2]

    inst_n = 0.95 * inst + np.abs(dw) + np.abs(dlat)
    v_n = np.clip(v + dv, -1.5, 1.5)
    w_n = np.clip(w + dw, -3.0, 3.0)
    vlat_n = vlat + dlat

    v_n = np.clip(v_n + push[:, 0], -1.5, 1.5)
    vlat_n = vlat_n + push[:, 1]

    th_n = th + w_n * dt
    cos_t = np.cos(th_n)
    sin_t = np.sin(th_n)
    x_n = x + (v_n * cos_t - vlat_n * sin_t) * dt
    y_n = y + (v_n * sin_t + vlat_n * cos_t) * dt

    return np.stack([x_n, y_n, th_n, v_n, w_n, vlat_n, inst_n], axis=1)


def arc_evaluate(cand, x, y, theta, n_steps, dt, circles, boxes, peds, ped_r, width):
    """Clearance and end pose of constant-command arcs.

    cand is (S, 2) rows of (v, w). The arc is the exact unicycle solution
    sampled at n_steps times dt. Clearance is the minimum over samples of
    distance-to-object-surface (walls, circle/box obstacles, pedestrians
    extrapolated at constant velocity), not including the robot radius.
    peds is (P, 4) rows of (x, y, vx, vy). Returns (clear (S,), end (S, 3)).
    """
    v = cand[:, 0:1]
    w = cand[:, 1:2]
    tk = (np.arange(n_steps, dtype=np.float64) + 1.0) * dt  # (K,)
    th = theta + w * tk  # (S, K)

    straight = np.abs(w) < 1e-9
    with np.errstate(divide="ignore", invalid="ignore"):
        rx = np.where(straight, v * tk * np.cos(theta), (v / w) * (np.sin(th) - np.sin(theta)))
        ry = np.where(straight, v * tk * np.sin(theta), -(v / w) * (np.cos(th) - np.cos(theta)))
    ax = x + rx
    ay = y + ry

    clear = np.minimum(ay, width - ay)

    for k in range(circles.shape[0]):
        d = np.hypot(ax - circles[k, 0], ay - circles[k, 1]) - circles[k, 2]
        clear = np.minimum(clear, d)

    for k in range(boxes.shape[0]):
        ddx = np.maximum(np.abs(ax - boxes[k, 0]) - boxes[k, 2], 0.0)
        ddy = np.maximum(np.abs(ay - boxes[k, 1]) - boxes[k, 3], 0.0)
        clear = np.minimum(clear, np.hypot(ddx, ddy))

    for k in range(peds.shape[0]):
        pxk = peds[k, 0] + peds[k, 2] * tk  # (K,)
        pyk = peds[k, 1] + peds[k, 3] * tk
        d = np.hypot(ax - pxk, ay - pyk) - ped_r
        clear = np.minimum(clear, d)

    end = np.stack([ax[:, -1], ay[:, -1], theta + w[:, 0] * tk[-1]], axis=1)
    return clear.min(axis=1), end


def grid_distance(free, src):
    """Multi-source shortest-path distances on a uint8 occupancy grid.

    free and src are (nx, ny) uint8 masks. Moves are 8-connected with
    integer costs 5 (axial) and 7 (diagonal, ~5*sqrt(2)); diagonal steps
    additionally require both adjacent axial cells free, so paths cannot
    cut corners between diagonally touching blocked cells. Returns (nx, ny)
    int64 distances, -1 where blocked or unreachable. Integer arithmetic
    keeps the result identical across backends.
    """
    nx, ny = free.shape
    freef = np.asarray(free, dtype=np.uint8).ravel()
    INF = np.int64(2**62)
    dist = np.full(nx * ny, INF, dtype=np.int64)

    heap = []
    for idx in np.flatnonzero(np.asarray(src, dtype=np.uint8).ravel() & freef):
        dist[idx] = 0
        heap.append((0, int(idx)))
    heapq.heapify(heap)

    moves = ((1, 0, 5), (-1, 0, 5), (0, 1, 5), (0, -1, 5), (1, 1, 7), (1, -1, 7), (-1, 1, 7), (-1, -1, 7))
    while heap:
        d, idx = heapq.heappop(heap)
        if d > dist[idx]:
            continue
        i, j = divmod(idx, ny)
        for di, dj, c in moves:
            ni = i + di
            nj = j + dj
            if ni < 0 or ni >= nx or nj < 0 or nj >= ny:
                continue
            nidx = ni * ny + nj
            if not freef[nidx]:
                continue
            if c == 7 and not (freef[i * ny + nj] and freef[ni * ny + j]):
                continue
            nd = d + c
            if nd < dist[nidx]:
                dist[nidx] = nd
                heapq.heappush(heap, (nd, nidx))

    out = dist.reshape(nx, ny)
    return np.where(out < INF, out, np.int64(-1))
