"""Numba-jitted kernel implementations. Same contracts as ``_numpy_impl``."""

from __future__ import annotations

import numpy as np
from numba import njit

_EPS = 1e-9


@njit(cache=True)
def _ray_ranges_jit(px, py, angles, circles, boxes, width, max_range):
    n = angles.shape[0]
    out = np.empty(n)
    for i in range(n):
        dx = np.cos(angles[i])
        dy = np.sin(angles[i])
        t = np.inf

        if abs(dy) > 1e-300:
            for wy in (0.0, width):
                tw = (wy - py) / dy
                if tw > _EPS and tw < t:
                    t = tw

        for k in range(circles.shape[0]):
            ox = circles[k, 0] - px
            oy = circles[k, 1] - py
            b = dx * ox + dy * oy
            c = ox * ox + oy * oy - circles[k, 2] * circles[k, 2]
            disc = b * b - c
            if disc >= 0.0:
                sq = np.sqrt(disc)
                t0 = b - sq
                t1 = b + sq
                if t0 > _EPS:
                    tc = t0
                elif t1 > _EPS:
                    tc = t1
                else:
                    tc = np.inf
                if tc < t:
                    t = tc

        for k in range(boxes.shape[0]):
            lox = boxes[k, 0] - boxes[k, 2]
            hix = boxes[k, 0] + boxes[k, 2]
            loy = boxes[k, 1] - boxes[k, 3]
            hiy = boxes[k, 1] + boxes[k, 3]
            if abs(dx) < 1e-300:
                if px >= lox and px <= hix:
                    tnx, tfx = -np.inf, np.inf
                else:
                    tnx, tfx = np.inf, -np.inf
            else:
                t1x = (lox - px) / dx
                t2x = (hix - px) / dx
                tnx = min(t1x, t2x)
                tfx = max(t1x, t2x)
            if abs(dy) < 1e-300:
                if py >= loy and py <= hiy:
                    tny, tfy = -np.inf, np.inf
                else:
                    tny, tfy = np.inf, -np.inf
            else:
                t1y = (loy - py) / dy
                t2y = (hiy - py) / dy
                tny = min(t1y, t2y)
                tfy = max(t1y, t2y)
            tnear = max(tnx, tny)
            tfar = min(tfx, tfy)
            if tnear <= tfar and tfar > _EPS:
                tb = tnear if tnear > _EPS else tfar
                if tb < t:
                    t = tb

        if t < _EPS:
            t = _EPS
        if t > max_range:
            t = max_range
        out[i] = t
    return out


def ray_ranges(px, py, angles, circles, boxes, width, max_range):
    return _ray_ranges_jit(
        float(px),
        float(py),
        np.ascontiguousarray(angles, dtype=np.float64),
        np.ascontiguousarray(circles, dtype=np.float64),
        np.ascontiguousarray(boxes, dtype=np.float64),
        float(width),
        float(max_range),
    )


@njit(cache=True)
def _plant_step_jit(s, actions, ext, noise, push, dt):
    n = s.shape[0]
    out = np.empty((n, 7))
    for i in range(n):
        x, y, th = s[i, 0], s[i, 1], s[i, 2]
        v, w, vlat, inst = s[i, 3], s[i, 4], s[i, 5], s[i, 6]

        dv = (2.0 * ext[i, 0] * actions[i, 0] - ext[i, 2] * v) * dt + noise[i, 0]
        dw = (4.0 * ext[i, 1] * actions[i, 1] - ext[i, 3] * w) * dt + noise[i, 1]
        dlat = (ext[i, 4] * abs(w) * v - 2.0 * vlat) * dt + noise[i, 2]

        inst_n = 0.95 * inst + abs(dw) + abs(dlat)
        v_n = min(max(v + dv, -1.5), 1.5)
        w_n = min(max(w + dw, -3.0), 3.0)
        vlat_n = vlat + dlat

        v_n = min(max(v_n + push[i, 0], -1.5), 1.5)
        vlat_n = vlat_n + push[i, 1]

        th_n = th + w_n * dt
        cos_t = np.cos(th_n)
        sin_t = np.sin(th_n)
        out[i, 0] = x + (v_n * cos_t - vlat_n * sin_t) * dt
        out[i, 1] = y + (v_n * sin_t + vlat_n * cos_t) * dt
        out[i, 2] = th_n
        out[i, 3] = v_n
        out[i, 4] = w_n
        out[i, 5] = vlat_n
        out[i, 6] = inst_n
    return out


def plant_step_batch(states, actions, ext, noise, push, dt):
    return _plant_step_jit(
        np.ascontiguousarray(states, dtype=np.float64),
        np.ascontiguousarray(actions, dtype=np.float64),
        np.ascontiguousarray(ext, dtype=np.float64),
        np.ascontiguousarray(noise, dtype=np.float64),
        np.ascontiguousarray(push, dtype=np.float64),
        float(dt),
    )


@njit(cache=True)
def _arc_evaluate_jit(cand, x, y, theta, n_steps, dt, circles, boxes, peds, ped_r, width):
    ns = cand.shape[0]
    clear = np.empty(ns)
    end = np.empty((ns, 3))
    sin0 = np.sin(theta)
    cos0 = np.cos(theta)
    for i in range(ns):
        v = cand[i, 0]
        w = cand[i, 1]
        best = np.inf
        ax = x
        ay = y
        for k in range(n_steps):
            tk = (k + 1.0) * dt
            th = theta + w * tk
            if abs(w) < 1e-9:
                ax = x + v * tk * cos0
                ay = y + v * tk * sin0
            else:
                ax = x + (v / w) * (np.sin(th) - sin0)
                ay = y - (v / w) * (np.cos(th) - cos0)

            c = min(ay, width - ay)
            if c < best:
                best = c
            for m in range(circles.shape[0]):
                d = np.hypot(ax - circles[m, 0], ay - circles[m, 1]) - circles[m, 2]
                if d < best:
                    best = d
            for m in range(boxes.shape[0]):
                ddx = max(abs(ax - boxes[m, 0]) - boxes[m, 2], 0.0)
                ddy = max(abs(ay - boxes[m, 1]) - boxes[m, 3], 0.0)
                d = np.hypot(ddx, ddy)
                if d < best:
                    best = d
            for m in range(peds.shape[0]):
                pxk = peds[m, 0] + peds[m, 2] * tk
                pyk = peds[m, 1] + peds[m, 3] * tk
                d = np.hypot(ax - pxk, ay - pyk) - ped_r
                if d < best:
                    best = d
        clear[i] = best
        end[i, 0] = ax
        end[i, 1] = ay
        end[i, 2] = theta + w * n_steps * dt
    return clear, end


def arc_evaluate(cand, x, y, theta, n_steps, dt, circles, boxes, peds, ped_r, width):
    return _arc_evaluate_jit(
        np.ascontiguousarray(cand, dtype=np.float64),
        float(x),
        float(y),
        float(theta),
        int(n_steps),
        float(dt),
        np.ascontiguousarray(circles, dtype=np.float64),
        np.ascontiguousarray(boxes, dtype=np.float64),
        np.ascontiguousarray(peds, dtype=np.float64),
        float(ped_r),
        float(width),
    )


@njit(cache=True)
def _heap_push(hk, hv, hn, key, val):
    i = hn
    hk[i] = key
    hv[i] = val
    while i > 0:
        p = (i - 1) >> 1
        if hk[p] <= hk[i]:
            break
        hk[p], hk[i] = hk[i], hk[p]
        hv[p], hv[i] = hv[i], hv[p]
        i = p
    return hn + 1


@njit(cache=True)
def _heap_pop(hk, hv, hn):
    key = hk[0]
    val = hv[0]
    hn -= 1
    hk[0] = hk[hn]
    hv[0] = hv[hn]
    i = 0
    while True:
        l = 2 * i + 1
        if l >= hn:
            break
        m = l
        r = l + 1
        if r < hn and hk[r] < hk[l]:
            m = r
        if hk[i] <= hk[m]:
            break
        hk[i], hk[m] = hk[m], hk[i]
        hv[i], hv[m] = hv[m], hv[i]
        i = m
    return key, val, hn


@njit(cache=True)
def _grid_distance_jit(free, src):
    nx, ny = free.shape
    n = nx * ny
    INF = np.int64(2**62)
    dist = np.full(n, INF, dtype=np.int64)

    cap = 8 * n + 16
    hk = np.empty(cap, dtype=np.int64)
    hv = np.empty(cap, dtype=np.int64)
    hn = 0
    for i in range(nx):
        for j in range(ny):
            if src[i, j] and free[i, j]:
                idx = i * ny + j
                dist[idx] = 0
                hn = _heap_push(hk, hv, hn, 0, idx)

    while hn > 0:
        d, idx, hn = _heap_pop(hk, hv, hn)
        if d > dist[idx]:
            continue
        i = idx // ny
        j = idx - i * ny
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                if di == 0 and dj == 0:
                    continue
                ni = i + di
                nj = j + dj
                if ni < 0 or ni >= nx or nj < 0 or nj >= ny:
                    continue
                nidx = ni * ny + nj
                if not free[ni, nj]:
                    continue
                if di != 0 and dj != 0:
                    if not (free[i, nj] and free[ni, j]):
                        continue
                    c = 7
                else:
                    c = 5
                nd = d + c
                if nd < dist[nidx]:
                    dist[nidx] = nd
                    hn = _heap_push(hk, hv, hn, nd, nidx)

    out = np.empty((nx, ny), dtype=np.int64)
    for i in range(nx):
        for j in range(ny):
            d = dist[i * ny + j]
            out[i, j] = d if d < INF else -1
    return out


def grid_distance(free, src):
    return _grid_distance_jit(
        np.ascontiguousarray(free, dtype=np.uint8),
        np.ascontiguousarray(src, dtype=np.uint8),
    )
