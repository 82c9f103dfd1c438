"""Classical baselines and glue controllers.

Four controllers live here: the privileged dynamic-window navigator (DWA)
used as a baseline and as the demonstration teacher, the PD set-point
command generator used by the tracking suites, the MPC-lite effort tracker
built on the linear nominal plant, and the hierarchical-RL navigator that
trains a command policy directly over the frozen gait.
"""

from __future__ import annotations

import csv
import json
import logging
import os
from dataclasses import dataclass, field, asdict

import numpy as np

from . import rng
from . import world as world_mod
from ._kernels import arc_evaluate, grid_distance, plant_step_batch
from .hierarchy import NAV_EVERY, T_HISTORY, V_CMD_MAX, W_CMD_MAX, Command
from .nn import Adam, load_checkpoint, save_checkpoint
from .nn.optim import TrainStepError
from .plant import DT, Extrinsics, GaitAction, RobotState, make_spawn_state, sample_extrinsics
from .rl import Critic, GaitActor, PpoConfig, compute_gae, load_gait_policy, ppo_update
from .sensing import N_BEAMS, nav_features, observe, wrap_angle
from .world import PED_RADIUS, ROBOT_RADIUS

_LOG = logging.getLogger("corridorlab.controllers")

NAV_DIM = N_BEAMS + 4
_Q_COLS = 10
_ROW = 2 + 6 + 2  # (u, q, a) layout of one history row


# ---------------------------------------------------------------------------
# Dynamic-window navigator


@dataclass
class DwaConfig:
    n_v: int = 11
    n_w: int = 11
    horizon: float = 2.0
    dt: float = 0.05
    accel_v: float = 2.0  # command slew bounds defining the reachable window
    accel_w: float = 4.0
    replan_dt: float = NAV_EVERY * DT
    w_heading: float = 2.0
    w_clearance: float = 0.6
    w_speed: float = 0.6
    clearance_margin: float = 0.25  # m beyond the admissibility radius where static cost decays to 0
    ped_margin: float = 1.2  # longer-reach margin for moving bodies: swerve before the trap closes
    standoff: float = 0.9  # personal-space margin around a walker's current position,
    # independent of its velocity: waypoint walkers can reverse without warning
    yield_near: float = 1.0  # approaching-walker distances over which the heading
    yield_far: float = 3.0  # weight fades out: survival spends freely, progress waits
    safety: float = 0.02  # margin over the robot radius; scene generation only
    # guarantees passages for the bare radius, so this must stay small
    ped_inflate: float = 0.2  # predicted pedestrians get this much extra radius
    fov: float = np.pi

    def __post_init__(self):
        if min(self.w_heading, self.w_clearance, self.w_speed) < 0.0:
            raise ValueError("DWA cost weights must be nonnegative")


def dwa_window(robot_state: RobotState, cfg: DwaConfig) -> tuple[np.ndarray, np.ndarray]:
    """Velocity samples reachable within one replan interval, inside the command box."""
    dv = cfg.accel_v * cfg.replan_dt
    dw = cfg.accel_w * cfg.replan_dt
    v_lo = min(max(0.0, robot_state.v - dv), V_CMD_MAX)
    v_hi = max(0.0, min(V_CMD_MAX, robot_state.v + dv))
    w_lo = min(max(-W_CMD_MAX, robot_state.omega - dw), W_CMD_MAX)
    w_hi = max(-W_CMD_MAX, min(W_CMD_MAX, robot_state.omega + dw))
    return np.linspace(v_lo, v_hi, cfg.n_v), np.linspace(w_lo, w_hi, cfg.n_w)


def _fov_mask(cx: np.ndarray, cy: np.ndarray, s: RobotState, half: float, near: float = 2.0) -> np.ndarray:
    # bodies behind the sensor cone are dropped unless close: a box whose
    # center sits abeam can still reach a corner into the robot's path
    bearing = np.arctan2(cy - s.y, cx - s.x) - s.theta
    bearing = np.arctan2(np.sin(bearing), np.cos(bearing))
    return (np.abs(bearing) <= half) | (np.hypot(cx - s.x, cy - s.y) <= near)


_FIELD_RES = 0.05  # same grid the scene generator certifies feasibility on
_FIELD_CACHE: dict = {}


def goal_field(scene, inflate: float = ROBOT_RADIUS) -> np.ndarray:
    """Geodesic distance-to-goal over inflated static free space (the cost map).

    Cells within `inflate` of a wall or static obstacle are blocked. The
    planner passes its admissibility radius here: gaps the arc rollouts
    would reject must read as blocked, or the field lures the robot into
    pockets it can never drive through. Pedestrians are absent by
    construction: the map is built once per scene and only guides; dynamic
    bodies are handled by the arc rollouts. Unreachable cells hold +inf.
    Results are memoized on the static geometry.
    """
    key = (
        round(float(scene.goal_x), 6),
        round(float(scene.corridor_width), 6),
        round(float(inflate), 6),
        scene.circle_arr.tobytes(),
        scene.box_arr.tobytes(),
    )
    hit = _FIELD_CACHE.get(key)
    if hit is not None:
        return hit

    res = _FIELD_RES
    nx = int(round(scene.goal_x / res)) + 1
    ny = int(round(scene.corridor_width / res)) + 1
    X, Y = np.meshgrid(np.arange(nx) * res, np.arange(ny) * res, indexing="ij")
    free = (Y >= inflate) & (Y <= scene.corridor_width - inflate)
    circles = scene.circle_arr
    for k in range(circles.shape[0]):
        free &= np.hypot(X - circles[k, 0], Y - circles[k, 1]) - circles[k, 2] > inflate
    boxes = scene.box_arr
    for k in range(boxes.shape[0]):
        ddx = np.maximum(np.abs(X - boxes[k, 0]) - boxes[k, 2], 0.0)
        ddy = np.maximum(np.abs(Y - boxes[k, 1]) - boxes[k, 3], 0.0)
        free &= np.hypot(ddx, ddy) > inflate

    src = np.zeros((nx, ny), dtype=np.uint8)
    src[-1, :] = 1
    d = grid_distance(free.astype(np.uint8), src)
    field = np.where(d >= 0, d * (res / 5.0), np.inf)

    if len(_FIELD_CACHE) >= 8:
        _FIELD_CACHE.pop(next(iter(_FIELD_CACHE)))
    _FIELD_CACHE[key] = field
    return field


def _field_at(field: np.ndarray, xs, ys) -> np.ndarray:
    # nearest cell, min over its 3x3 block: admissible arc endpoints can sit
    # one cell inside the inflation ring where the field itself is blocked
    nx, ny = field.shape
    ix = np.clip(np.rint(np.asarray(xs) / _FIELD_RES).astype(np.int64), 1, nx - 2)
    iy = np.clip(np.rint(np.asarray(ys) / _FIELD_RES).astype(np.int64), 1, ny - 2)
    best = np.full(np.shape(ix), np.inf)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            best = np.minimum(best, field[ix + di, iy + dj])
    return best


def _ped_clearance(
    cand, s: RobotState, n_steps: int, dt: float, peds, ped_r_adm: float, ped_r_cost: float, width: float
) -> np.ndarray:
    """Min time-aligned surface distance per arc to extrapolated pedestrians.

    Same closed-form unicycle sampling as the arc kernel, then the arc
    endpoint is held for another horizon while the pedestrians keep walking:
    an arc that parks the robot in a pedestrian's lane scores as close as
    one that crosses it. A robot at rest cannot outrun an oncoming walker
    from a standing start, so the cost must bite before the trap closes.

    Constant-velocity rays are folded at the corridor walls the same way
    the plant reflects walkers. Walkers recompute their velocity every
    tick, so one pressed against a wall by its wander term reports a
    bounced (inward) velocity while its actual track keeps hugging the
    wall. For those the admissibility ray is the wall-hug ray (same vx,
    vy = 0): the reported vy is known-corrupted, and extrapolating it
    sweeps the whole reachable window and freezes the planner in place.
    The cost still hedges across both hypotheses and takes the worse.

    Returns (adm_clear, cost_clear, now_clear): the first minimizes over
    the arc horizon only (admissibility keeps its horizon semantics), the
    second over the held extension as well, and the third measures each
    arc against the walkers' current positions alone, prediction-free.
    Admissibility uses the bare walker radius (ped_r_adm): it decides
    predicted contact, and padding it manufactures all-blocked states in
    tight spots where a real escape exists. The cost channels use the
    inflated radius (ped_r_cost) so margin stays preferred when available.
    """
    if peds.shape[0] == 0:
        inf = np.full(len(cand), np.inf)
        return inf, inf, inf
    v = cand[:, 0:1]
    w = cand[:, 1:2]
    tk = (np.arange(2 * n_steps, dtype=np.float64) + 1.0) * dt
    ta = np.minimum(tk, n_steps * dt)  # robot rides the arc, then holds its endpoint
    th = s.theta + w * ta
    straight = np.abs(w) < 1e-9
    with np.errstate(divide="ignore", invalid="ignore"):
        rx = np.where(straight, v * ta * np.cos(s.theta), (v / w) * (np.sin(th) - np.sin(s.theta)))
        ry = np.where(straight, v * ta * np.sin(s.theta), -(v / w) * (np.cos(th) - np.cos(s.theta)))
    ax = s.x + rx
    ay = s.y + ry
    span = width - 2.0 * PED_RADIUS  # walkers bounce between [r, width - r]
    d = np.full((len(cand), 2 * n_steps), np.inf)
    d_cost = np.full((len(cand), 2 * n_steps), np.inf)
    d_now = np.full((len(cand), 2 * n_steps), np.inf)
    for k in range(peds.shape[0]):
        px = peds[k, 0] + peds[k, 2] * tk
        py = np.mod(peds[k, 1] - PED_RADIUS + peds[k, 3] * tk, 2.0 * span)
        py = PED_RADIUS + span - np.abs(span - py)
        pinned = peds[k, 1] < PED_RADIUS + 0.05 or peds[k, 1] > width - PED_RADIUS - 0.05
        c_ray = np.hypot(ax - px, ay - py)
        if pinned:
            c_hug = np.hypot(ax - px, ay - peds[k, 1])
            d = np.minimum(d, c_hug - ped_r_adm)
            d_cost = np.minimum(d_cost, np.minimum(c_ray, c_hug) - ped_r_cost)
        else:
            d = np.minimum(d, c_ray - ped_r_adm)
            d_cost = np.minimum(d_cost, c_ray - ped_r_cost)
        d_now = np.minimum(d_now, np.hypot(ax - peds[k, 0], ay - peds[k, 1]) - ped_r_cost)
    return d[:, :n_steps].min(axis=1), d_cost.min(axis=1), d_now.min(axis=1)


def _static_transit_cost(
    cand, s: RobotState, n_steps: int, dt: float, circles, boxes, width: float, r_adm: float, margin: float
) -> np.ndarray:
    """Mean margin deficit along each arc against the static scene.

    Grading statics by the worst instant makes a legal pinch cost the same
    as riding a wall for the whole horizon, and the planner answers by
    braking at every doorway it must eventually pass; parked in a corridor
    is where faster traffic runs you down. Averaging the deficit over the
    arc prices time spent tight, so quick transit through an unavoidable
    gap is cheap while lingering near anything stays expensive. A damped
    worst-instant floor keeps flat-out corner shaves from reading as free.
    Hard admissibility still uses the worst instant; this only grades
    survivors.
    """
    v = cand[:, 0:1]
    w = cand[:, 1:2]
    tk = (np.arange(n_steps, dtype=np.float64) + 1.0) * dt
    th = s.theta + w * tk
    straight = np.abs(w) < 1e-9
    with np.errstate(divide="ignore", invalid="ignore"):
        rx = np.where(straight, v * tk * np.cos(s.theta), (v / w) * (np.sin(th) - np.sin(s.theta)))
        ry = np.where(straight, v * tk * np.sin(s.theta), -(v / w) * (np.cos(th) - np.cos(s.theta)))
    ax = s.x + rx
    ay = s.y + ry
    d = np.minimum(ay, width - ay)
    for k in range(circles.shape[0]):
        d = np.minimum(d, np.hypot(ax - circles[k, 0], ay - circles[k, 1]) - circles[k, 2])
    for k in range(boxes.shape[0]):
        ddx = np.maximum(np.abs(ax - boxes[k, 0]) - boxes[k, 2], 0.0)
        ddy = np.maximum(np.abs(ay - boxes[k, 1]) - boxes[k, 3], 0.0)
        d = np.minimum(d, np.hypot(ddx, ddy))
    deficit = np.clip(1.0 - (d - r_adm) / margin, 0.0, 1.0)
    return np.maximum(deficit.mean(axis=1), 0.25 * deficit.max(axis=1))


def dwa_plan(scene, robot_state: RobotState, config: DwaConfig | None = None) -> Command:
    """One dynamic-window planning cycle over ground-truth scene state.

    Candidate (v, w) pairs from the reachable window are rolled out as
    constant-command arcs over the horizon against obstacles and
    constant-velocity pedestrian extrapolations, restricted to bodies whose
    center lies in the 180 deg field of view or within 2 m. Colliding arcs
    are discarded; the survivor minimizing the weighted (heading, clearance,
    speed) cost wins, ties broken by higher v then smaller |w| then grid
    order. The heading term is goal progress read off the per-scene cost
    map, so guidance routes around dead ends and back out of pockets. All
    candidates colliding yields the stop command.
    """
    cfg = config or DwaConfig()
    s = robot_state
    vs, ws = dwa_window(s, cfg)
    cand = np.column_stack([np.repeat(vs, cfg.n_w), np.tile(ws, cfg.n_v)])

    half = cfg.fov / 2.0
    circles = scene.circle_arr
    if circles.shape[0]:
        circles = circles[_fov_mask(circles[:, 0], circles[:, 1], s, half)]
    boxes = scene.box_arr
    if boxes.shape[0]:
        boxes = boxes[_fov_mask(boxes[:, 0], boxes[:, 1], s, half)]
    peds = scene.ped_arr()
    if peds.shape[0]:
        peds = peds[_fov_mask(peds[:, 0], peds[:, 1], s, half)]

    n_steps = int(round(cfg.horizon / cfg.dt))
    static_clear, end = arc_evaluate(
        cand, s.x, s.y, s.theta, n_steps, cfg.dt, circles, boxes, np.zeros((0, 4)), 0.0, scene.corridor_width
    )
    ped_adm, ped_cost_clear, ped_now_clear = _ped_clearance(
        cand, s, n_steps, cfg.dt, peds, PED_RADIUS, PED_RADIUS + cfg.ped_inflate, scene.corridor_width
    )
    clear = np.minimum(static_clear, ped_adm)

    r_adm = ROBOT_RADIUS + cfg.safety  # sampled arcs can dip a few mm between samples
    admissible = clear > r_adm
    if not admissible.any():
        return Command(0.0, 0.0)

    # heading cost: geodesic descent of the cost map per meter traveled, so
    # it grades direction quality without rewarding speed (that is w_speed's
    # job, and conflating them forbids braking in front of walkers);
    # 0 = every meter descends the field, 1 = sideways, 2 = straight away
    field = goal_field(scene, r_adm)
    phi_now = float(_field_at(field, s.x, s.y))
    if not np.isfinite(phi_now):
        # the strict map closes marginal passages the 0.05 m grid cannot
        # certify; if that disconnects us from the goal entirely, fall back
        # to the bare-radius map rather than drive without guidance
        field = goal_field(scene, ROBOT_RADIUS)
        phi_now = float(_field_at(field, s.x, s.y))
    phi_end = _field_at(field, end[:, 0], end[:, 1])
    arc_len = cand[:, 0] * cfg.horizon
    if np.isfinite(phi_now):
        phi_end = np.where(np.isfinite(phi_end), phi_end, phi_now + 2.0 * arc_len)
        # descent per useful meter: an arc that overruns the goal is judged on
        # the distance that was left, not on its full length
        useful = np.maximum(np.minimum(arc_len, phi_now), 1e-9)
        eff = np.where(arc_len > 1e-9, (phi_now - phi_end) / useful, 0.0)
        heading_cost = 1.0 - np.clip(eff, -1.0, 1.0)
    else:
        heading_cost = np.zeros(len(cand))

    clear_cost = _static_transit_cost(
        cand, s, n_steps, cfg.dt, circles, boxes, scene.corridor_width, r_adm, cfg.clearance_margin
    )
    clear_cost = np.maximum(clear_cost, 1.0 - (ped_cost_clear - r_adm) / cfg.ped_margin)
    clear_cost = np.maximum(clear_cost, 1.0 - (ped_now_clear - r_adm) / cfg.standoff)
    speed_cost = 1.0 - cand[:, 0] / V_CMD_MAX

    # yield gate: progress stops mattering when a walker bears down from
    # ahead. There is no reverse gear, so escaping a head-on walker means a
    # U-turn that must start while it is still ~3 m out; at full heading
    # weight the U-turn costs more than parking, and a parked robot is soon
    # inside a window the slew bounds cannot lift over the walker's swath -
    # every arc then collides and the stop contract rides the freeze into
    # the collision. A walker closing from behind must not gate: there the
    # escape is flight along the heading, and progress is what funds it.
    gate = 1.0
    for k in range(peds.shape[0]):
        dx = s.x - peds[k, 0]
        dy = s.y - peds[k, 1]
        d0 = float(np.hypot(dx, dy))
        closing = (peds[k, 2] * dx + peds[k, 3] * dy) / max(d0, 1e-9)
        ahead = (-dx) * np.cos(s.theta) + (-dy) * np.sin(s.theta) > 0.0
        if closing > 0.05 and ahead:
            gate = min(gate, float(np.clip((d0 - cfg.yield_near) / (cfg.yield_far - cfg.yield_near), 0.0, 1.0)))

    cost = cfg.w_heading * gate * heading_cost + cfg.w_clearance * clear_cost + cfg.w_speed * speed_cost
    cost = np.where(admissible, cost, np.inf)

    pick = int(np.lexsort((np.abs(cand[:, 1]), -cand[:, 0], cost))[0])
    return Command(float(cand[pick, 0]), float(cand[pick, 1]))


class DwaNav:
    """Privileged navigator wrapper for episode runs and demo generation."""

    privileged = True

    def __init__(self, config: DwaConfig | None = None):
        self.cfg = config or DwaConfig()

    def __call__(self, scene, robot_state: RobotState) -> Command:
        return dwa_plan(scene, robot_state, self.cfg)

    def reset(self):
        pass


# ---------------------------------------------------------------------------
# PD set-point command generator


@dataclass
class PdGains:
    kp_v: float = 1.2
    kd_v: float = 0.1
    kp_w: float = 2.0
    kd_w: float = 0.1


ADVANCE_RADIUS = 0.15


def pd_setpoint_commands(reference, robot_state: RobotState, gains: PdGains | None = None) -> Command:
    """Command toward the first unconsumed set point.

    Leading set points within ADVANCE_RADIUS are consumed in order; the
    last one is always retained as the target. v from the along-track
    distance, w from the bearing error, both with damping on the current
    rates, clipped to the command box.
    """
    if len(reference) == 0:
        raise ValueError("reference must be non-empty")
    g = gains or PdGains()
    s = robot_state
    i = 0
    while i < len(reference) - 1 and float(np.hypot(reference[i][0] - s.x, reference[i][1] - s.y)) < ADVANCE_RADIUS:
        i += 1
    tx, ty = float(reference[i][0]), float(reference[i][1])
    dx, dy = tx - s.x, ty - s.y
    along = dx * np.cos(s.theta) + dy * np.sin(s.theta)
    bearing = 0.0 if np.hypot(dx, dy) < 1e-12 else wrap_angle(np.arctan2(dy, dx) - s.theta)
    v = g.kp_v * along + g.kd_v * (-s.v)
    w = g.kp_w * bearing + g.kd_w * (-s.omega)
    return Command(float(v), float(w)).clipped()


class PdTracker:
    """Stateful PD wrapper: remembers which set points were consumed."""

    def __init__(self, reference, gains: PdGains | None = None):
        self.ref = [(float(p[0]), float(p[1])) for p in reference]
        self.gains = gains or PdGains()
        self.i = 0

    def __call__(self, robot_state: RobotState) -> Command:
        while self.i < len(self.ref) - 1 and np.hypot(self.ref[self.i][0] - robot_state.x, self.ref[self.i][1] - robot_state.y) < ADVANCE_RADIUS:
            self.i += 1
        return pd_setpoint_commands(self.ref[self.i :], robot_state, self.gains)

    def reset(self):
        self.i = 0


# ---------------------------------------------------------------------------
# MPC-lite effort tracker


@dataclass
class MpcConfig:
    horizon: int = 10
    iterations: int = 200
    step: float = 1.0  # < 1/lambda_max (~1.19 for the turn chain): monotone descent
    q_weight: float = 1.0
    r_weight: float = 0.01
    residual_tol: float = 1e-4


class MpcLite:
    """Receding-horizon tracker on the linear nominal plant.

    The forward/turn chains are decoupled linear systems, so the predicted
    velocities are affine in the planned efforts: x_t = decay_t x0 + (S a)_t.
    The quadratic tracking cost is minimized by projected gradient descent
    on the action box; the previous plan, shifted one tick, warm-starts each
    solve. Non-convergence applies the best iterate and logs a warning (once
    per instance at warning level, then at debug level).
    """

    def __init__(self, config: MpcConfig | None = None, model: Extrinsics | None = None):
        self.cfg = config or MpcConfig()
        ext = model or Extrinsics()
        H = self.cfg.horizon
        self._decay = np.zeros((H, 2))
        self._S = np.zeros((2, H, H))
        for chain, (alpha, beta) in enumerate(
            [(1.0 - DT * ext.damp_v, 2.0 * DT * ext.gain_v), (1.0 - DT * ext.damp_w, 4.0 * DT * ext.gain_w)]
        ):
            self._decay[:, chain] = alpha ** np.arange(1, H + 1)
            for t in range(1, H + 1):
                for src in range(t):
                    self._S[chain, t - 1, src] = beta * alpha ** (t - 1 - src)
        self.plan = np.zeros((H, 2))
        self.stats = {"calls": 0, "nonconverged": 0}
        self._warned = False

    def reset(self):
        self.plan[:] = 0.0
        self._warned = False

    def _objective_grad(self, a: np.ndarray, x0: np.ndarray, u: np.ndarray):
        q, r = self.cfg.q_weight, self.cfg.r_weight
        J = 0.0
        grad = np.empty_like(a)
        for chain in range(2):
            x = self._decay[:, chain] * x0[chain] + self._S[chain] @ a[:, chain]
            e = x - u[chain]
            J += q * float(e @ e) + r * float(a[:, chain] @ a[:, chain])
            grad[:, chain] = 2.0 * q * (self._S[chain].T @ e) + 2.0 * r * a[:, chain]
        return J, grad

    def solve(self, v0: float, w0: float, u) -> tuple[np.ndarray, dict]:
        cfg = self.cfg
        x0 = np.array([v0, w0])
        uu = np.array([u[0], u[1]])
        a = np.vstack([self.plan[1:], self.plan[-1:]])  # shifted warm start
        trace = np.empty(cfg.iterations + 1)
        best_J = np.inf
        best = a
        for it in range(cfg.iterations + 1):
            J, grad = self._objective_grad(a, x0, uu)
            trace[it] = J
            if J < best_J:
                best_J, best = J, a
            if it == cfg.iterations:
                break
            a = np.clip(a - cfg.step * grad, -1.0, 1.0)
        _, g_best = self._objective_grad(best, x0, uu)
        residual = float(np.abs(best - np.clip(best - cfg.step * g_best, -1.0, 1.0)).max() / cfg.step)
        self.stats["calls"] += 1
        if residual > cfg.residual_tol:
            self.stats["nonconverged"] += 1
            msg = f"mpc solve residual {residual:.2e} > {cfg.residual_tol:.0e} after {cfg.iterations} iterations; applying best iterate"
            if self._warned:
                _LOG.debug(msg)
            else:
                _LOG.warning(msg)
                self._warned = True
        self.plan = best
        return best, {"J": best_J, "residual": residual, "trace": trace}

    def __call__(self, features: np.ndarray) -> GaitAction:
        # newest history row carries (u, q, a_prev); exact state access per contract
        row = features[T_HISTORY * _ROW :]
        plan, _ = self.solve(float(row[2]), float(row[3]), (float(row[0]), float(row[1])))
        return GaitAction(float(plan[0, 0]), float(plan[0, 1]))


def mpc_lite_track(u: Command, robot_state: RobotState, nominal_model: Extrinsics | None = None, horizon: int = 10) -> GaitAction:
    """Single cold-start MPC solve; first planned action."""
    mpc = MpcLite(MpcConfig(horizon=horizon), nominal_model)
    plan, _ = mpc.solve(robot_state.v, robot_state.omega, (u.v_cmd, u.w_cmd))
    return GaitAction(float(plan[0, 0]), float(plan[0, 1]))


# ---------------------------------------------------------------------------
# Hierarchical-RL navigator


def _map_nav_actions(raw: np.ndarray) -> np.ndarray:
    """Raw policy outputs to command-box commands."""
    out = np.empty_like(raw, dtype=np.float64)
    out[:, 0] = np.clip((raw[:, 0] + 1.0) * 0.5 * V_CMD_MAX, 0.0, V_CMD_MAX)
    out[:, 1] = np.clip(raw[:, 1] * W_CMD_MAX, -W_CMD_MAX, W_CMD_MAX)
    return out


def _make_scene(seed: int, difficulty: str):
    if difficulty == "empty":
        return world_mod.Scene(seed, "empty", [], [])
    return world_mod.generate_scene(seed, difficulty)


class VecNavEnv:
    """N lockstep corridor episodes driven at the navigation rate.

    Each nav step applies the mapped command for NAV_EVERY plant ticks
    through the frozen gait policy (batched across workers). Reward is the
    forward progress over the block; collision or fall adds the terminal
    penalty.
    """

    LAT_SLOTS = 4
    FALL_PENALTY = -5.0

    def __init__(self, n: int, seed: int, gait_actor: GaitActor, difficulty: str = "hard", randomize: bool = True, episode_seconds: float = 40.0):
        self.n = n
        self.seed = seed
        self.gait = gait_actor
        self.difficulty = difficulty
        self.randomize = randomize
        self.episode_seconds = episode_seconds
        self.r = rng.stream(seed, rng.ROLLOUT, 1)
        self.scenes: list = [None] * n
        self.states = np.zeros((n, 7))
        self.ext = np.zeros((n, 5))
        self.latency = np.zeros(n, dtype=np.int64)
        self.noise_std = np.zeros((n, 3))
        self.queue = np.zeros((n, self.LAT_SLOTS, 2))
        self.qp = 0
        self.hist = np.zeros((n, T_HISTORY + 1, _Q_COLS))
        self.prev_action = np.zeros((n, 2))
        self.pushes: list[list] = [[] for _ in range(n)]
        self.push_i = np.zeros(n, dtype=np.int64)
        self.tick_in_ep = np.zeros(n, dtype=np.int64)
        self._ep_counter = 0
        for i in range(n):
            self._reset_worker(i)

    def _reset_worker(self, i: int):
        self._ep_counter += 1
        scene = _make_scene(self.seed * 1_000_003 + self._ep_counter, self.difficulty)
        scene.time_limit = self.episode_seconds
        self.scenes[i] = scene
        self.states[i] = make_spawn_state(scene).as_array()
        self.queue[i] = 0.0
        self.hist[i] = 0.0
        self.prev_action[i] = 0.0
        self.tick_in_ep[i] = 0
        if self.randomize:
            e = sample_extrinsics(self.seed * 2_000_003 + self._ep_counter, duration=self.episode_seconds + 5.0)
            self.ext[i] = e.ext_row()
            self.latency[i] = e.latency
            self.noise_std[i] = e.noise_std
            self.pushes[i] = [(t, np.asarray(p)) for t, p in e.push_schedule]
        else:
            self.ext[i] = np.array([1.0, 1.0, 1.0, 1.0, 0.0])
            self.latency[i] = 0
            self.noise_std[i] = 0.0
            self.pushes[i] = []
        self.push_i[i] = 0

    def observe(self) -> np.ndarray:
        feats = np.empty((self.n, NAV_DIM), dtype=np.float32)
        for i in range(self.n):
            obs = observe(self.scenes[i], RobotState.from_array(self.states[i]))
            feats[i] = nav_features(obs)
        return feats

    def step(self, raw_actions: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        cmds = _map_nav_actions(np.asarray(raw_actions))
        x0 = self.states[:, 0].copy()
        active = np.ones(self.n, dtype=bool)
        crashed = np.zeros(self.n, dtype=bool)
        done = np.zeros(self.n, dtype=bool)

        for _ in range(NAV_EVERY):
            if not active.any():
                break
            q = np.column_stack(
                [
                    self.states[:, 3],
                    self.states[:, 4],
                    self.states[:, 5],
                    self.states[:, 6],
                    np.sin(self.states[:, 2]),
                    np.cos(self.states[:, 2]),
                ]
            )
            self.hist[active, :-1] = self.hist[active, 1:]
            self.hist[active, -1, 0:2] = cmds[active]
            self.hist[active, -1, 2:8] = q[active]
            self.hist[active, -1, 8:10] = self.prev_action[active]

            a = np.clip(self.gait.mean(self.hist.reshape(self.n, -1).astype(np.float32)).astype(np.float64), -1.0, 1.0)
            self.queue[:, self.qp % self.LAT_SLOTS] = a
            delayed = self.queue[np.arange(self.n), (self.qp - self.latency) % self.LAT_SLOTS]
            self.qp += 1

            noise = self.r.standard_normal((self.n, 3)) * self.noise_std
            push = np.zeros((self.n, 2))
            t_next = (self.tick_in_ep + 1) * DT
            for i in range(self.n):
                pl = self.pushes[i]
                while self.push_i[i] < len(pl) and pl[self.push_i[i]][0] <= t_next[i]:
                    push[i] += pl[self.push_i[i]][1]
                    self.push_i[i] += 1

            frozen = self.states[~active].copy()
            stepped = plant_step_batch(self.states, delayed, self.ext, noise, push, DT)
            stepped[~active] = frozen
            self.states = stepped
            self.prev_action[active] = a[active]
            self.tick_in_ep[active] += 1

            for i in np.flatnonzero(active):
                rs = RobotState.from_array(self.states[i])
                if rs.fallen:
                    world_mod.mark_terminal(self.scenes[i], rs, world_mod.FAIL_FALL)
                    crashed[i] = True
                    done[i] = True
                    active[i] = False
                    continue
                _, status = world_mod.step_world(self.scenes[i], rs)
                if status.terminal:
                    crashed[i] = crashed[i] or status.state == world_mod.FAIL_COLLISION
                    done[i] = True
                    active[i] = False

        rewards = self.states[:, 0] - x0 + np.where(crashed, self.FALL_PENALTY, 0.0)
        for i in np.flatnonzero(done):
            self._reset_worker(i)
        return rewards, done.astype(np.float64)


def hrl_collect_rollout(env: VecNavEnv, actor: GaitActor, critic: Critic, horizon: int, r: np.random.Generator) -> dict:
    n = env.n
    obs = np.empty((horizon, n, NAV_DIM), dtype=np.float32)
    acts = np.empty((horizon, n, 2), dtype=np.float32)
    logps = np.empty((horizon, n))
    rews = np.empty((horizon, n))
    vals = np.empty((horizon, n))
    dones = np.empty((horizon, n))
    for t in range(horizon):
        o = env.observe()
        a, logp = actor.sample(o, r)
        v = critic.value(o)
        rew, done = env.step(a)
        obs[t], acts[t], logps[t], rews[t], vals[t], dones[t] = o, a, logp, rew, v, done
    bootstrap = critic.value(env.observe())
    adv, ret = compute_gae(rews, vals, dones, bootstrap=bootstrap)
    M = horizon * n
    return {
        "obs": obs.reshape(M, -1),
        "actions": acts.reshape(M, 2),
        "logp": logps.reshape(M),
        "adv": adv.reshape(M),
        "ret": ret.reshape(M),
        "mean_reward": float(rews.mean()),
    }


@dataclass
class HrlTrainConfig:
    seed: int = 0
    workers: int = 16
    horizon: int = 128
    total_steps: int = 300_000
    difficulty: str = "hard"
    randomize: bool = True
    episode_seconds: float = 40.0
    anneal: bool = True
    gait_ckpt: str = ""
    ppo: PpoConfig = field(default_factory=PpoConfig)
    out_dir: str = "runs/hrl"

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=1)


HRL_SIZES = [NAV_DIM, 128, 128, 2]


def save_hrl_checkpoint(path, actor: GaitActor, extra: dict | None = None) -> int:
    return save_checkpoint(path, {"kind": "hrl_nav", "sizes": actor.sizes}, actor.get_flat(), extra=extra)


class HrlNavPolicy:
    """Deployment wrapper: Observation -> mean command."""

    def __init__(self, actor: GaitActor):
        self.actor = actor

    def __call__(self, obs) -> Command:
        m = self.actor.mean(nav_features(obs)[None, :].astype(np.float32))[0]
        return Command(float((m[0] + 1.0) * 0.5 * V_CMD_MAX), float(m[1] * W_CMD_MAX))

    def reset(self):
        pass


def load_hrl_policy(path) -> HrlNavPolicy:
    arch, flat, extra, _ = load_checkpoint(path)
    if arch.get("kind") != "hrl_nav":
        raise ValueError(f"checkpoint {path} is not an hrl navigator (kind={arch.get('kind')!r})")
    actor = GaitActor(seed=0, sizes=arch["sizes"])
    actor.set_flat(flat)
    return HrlNavPolicy(actor)


def train_hrl_nav(cfg: HrlTrainConfig) -> str:
    """PPO over the command space at the navigation rate; returns the final
    checkpoint path. Requires a trained gait checkpoint."""
    if not cfg.gait_ckpt:
        raise ValueError("config must name a trained gait checkpoint")
    gait = load_gait_policy(cfg.gait_ckpt)
    os.makedirs(cfg.out_dir, exist_ok=True)
    with open(os.path.join(cfg.out_dir, "config.json"), "w") as f:
        f.write(cfg.to_json())

    actor = GaitActor(seed=cfg.seed + 17, sizes=HRL_SIZES)
    critic = Critic(seed=cfg.seed + 17, sizes=[NAV_DIM, 128, 128, 1])
    opt = Adam(actor.parameters() + critic.parameters(), lr=cfg.ppo.lr)
    env = VecNavEnv(cfg.workers, cfg.seed, gait.actor, cfg.difficulty, cfg.randomize, cfg.episode_seconds)
    roll_rng = rng.stream(cfg.seed, rng.TRAIN, 10)
    upd_rng = rng.stream(cfg.seed, rng.TRAIN, 11)

    final_path = os.path.join(cfg.out_dir, "final.ckpt")
    snap = {k: v for k, v in json.loads(cfg.to_json()).items() if k != "out_dir"}
    n_updates = max(1, cfg.total_steps // (cfg.workers * cfg.horizon))
    rows = []
    for k in range(n_updates):
        if cfg.anneal:
            opt.lr = cfg.ppo.lr * (1.0 - k / n_updates)
        batch = hrl_collect_rollout(env, actor, critic, cfg.horizon, roll_rng)
        try:
            ppo_update(actor, critic, opt, batch, cfg.ppo, upd_rng)
        except TrainStepError as e:
            print(f"update {k}: {e}; skipping")
        rows.append(((k + 1) * cfg.workers * cfg.horizon, batch["mean_reward"]))

    save_hrl_checkpoint(final_path, actor, extra={"step": cfg.total_steps, "config": snap})
    with open(os.path.join(cfg.out_dir, "curve.csv"), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["step", "mean_return"])
        for row in rows:
            w.writerow([row[0], repr(float(row[1]))])
    return final_path
