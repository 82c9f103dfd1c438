"""Corridor world: procedural scenes, GP-driven pedestrians, episode stepping.

The corridor is the strip 0 <= y <= 3 with open ends; the robot spawns at
(0, 1.5) heading +x and the goal is the line x = 50. All randomness is
drawn from counter-based streams derived from the scene seed, so a
(seed, difficulty) pair always produces the identical scene and the
identical pedestrian motion.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import ndimage

from . import rng
from ._kernels import ray_ranges  # noqa: F401  (re-exported for sensing)

CORRIDOR_WIDTH = 3.0
CORRIDOR_LENGTH = 50.0
ROBOT_RADIUS = 0.3
PED_RADIUS = 0.3
PED_SPEED = 1.0
PED_SPEED_MAX = 1.6
DT = 1.0 / 38.0
TIME_LIMIT = 120.0

# Feasibility: a clear corridor of this width must connect start to goal.
MIN_CLEARANCE_CORRIDOR = 0.6
_FEAS_GRID = 0.05

# GP perturbation of pedestrian velocity (squared-exponential kernel).
GP_LENGTHSCALE = 2.0
GP_VARIANCE = 0.09
_GP_SAMPLE_DT = 0.25

EASY, MEDIUM, HARD = "easy", "medium", "hard"
DIFFICULTIES = (EASY, MEDIUM, HARD)

RUNNING = "Running"
SUCCESS = "SuccessReachedGoal"
FAIL_COLLISION = "FailCollision"
FAIL_FALL = "FailFall"
FAIL_TIMEOUT = "FailTimeout"
FAIL_NONFINITE = "FailPolicyNonFinite"  # diagnostic abort, distinct from FailFall
TERMINAL_STATES = (SUCCESS, FAIL_COLLISION, FAIL_FALL, FAIL_TIMEOUT, FAIL_NONFINITE)


class GenerationError(RuntimeError):
    """Raised when no feasible layout exists after all retries (a bug, not bad input)."""


@dataclass
class Obstacle:
    shape: str  # "circle" or "box"
    cx: float
    cy: float
    radius: float = 0.0  # circle
    hx: float = 0.0  # box half extents
    hy: float = 0.0
    oid: int = 0


@dataclass
class Pedestrian:
    x: float
    y: float
    vx: float = 0.0
    vy: float = 0.0
    radius: float = PED_RADIUS
    waypoints: np.ndarray = field(default_factory=lambda: np.zeros((2, 2)))
    target: int = 1
    gp_seed: int = 0
    gp_track: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))


@dataclass
class EpisodeStatus:
    state: str
    travel_distance: float
    elapsed: float

    @property
    def terminal(self) -> bool:
        return self.state != RUNNING


@dataclass
class Scene:
    seed: int
    difficulty: str
    obstacles: list[Obstacle]
    pedestrians: list[Pedestrian]
    corridor_width: float = CORRIDOR_WIDTH
    corridor_length: float = CORRIDOR_LENGTH
    goal_x: float = CORRIDOR_LENGTH
    time_limit: float = TIME_LIMIT
    tick: int = 0
    travel: float = 0.0
    state: str = RUNNING

    def __post_init__(self):
        self._pack_static()

    def _pack_static(self):
        circ = [(o.cx, o.cy, o.radius) for o in self.obstacles if o.shape == "circle"]
        box = [(o.cx, o.cy, o.hx, o.hy) for o in self.obstacles if o.shape == "box"]
        self.circle_arr = np.array(circ, dtype=np.float64).reshape(-1, 3)
        self.box_arr = np.array(box, dtype=np.float64).reshape(-1, 4)

    def ped_arr(self) -> np.ndarray:
        """Pedestrian (x, y, vx, vy) rows at the current tick."""
        return np.array([(p.x, p.y, p.vx, p.vy) for p in self.pedestrians], dtype=np.float64).reshape(-1, 4)

    def status(self) -> EpisodeStatus:
        return EpisodeStatus(self.state, self.travel, self.tick * DT)

    def copy(self) -> "Scene":
        peds = [
            Pedestrian(p.x, p.y, p.vx, p.vy, p.radius, p.waypoints.copy(), p.target, p.gp_seed, p.gp_track)
            for p in self.pedestrians
        ]
        return Scene(
            self.seed,
            self.difficulty,
            list(self.obstacles),
            peds,
            self.corridor_width,
            self.corridor_length,
            self.goal_x,
            self.time_limit,
            self.tick,
            self.travel,
            self.state,
        )


@lru_cache(maxsize=8)
def _gp_chol(n: int, dt: float, lengthscale: float, variance: float) -> np.ndarray:
    t = np.arange(n) * dt
    d = t[:, None] - t[None, :]
    gram = variance * np.exp(-0.5 * (d / lengthscale) ** 2)
    gram[np.diag_indices(n)] += 1e-8
    try:
        return np.linalg.cholesky(gram)
    except np.linalg.LinAlgError as e:
        raise FloatingPointError(f"GP Gram matrix not positive definite after jitter: {e}") from e


def sample_gp_track(seed: int, duration: float, dt: float, lengthscale: float = GP_LENGTHSCALE, variance: float = GP_VARIANCE) -> np.ndarray:
    """Draw a 2D velocity-perturbation sequence from a zero-mean SE-kernel GP.

    Each axis is sampled independently via Cholesky factorization of the
    kernel Gram matrix (diagonal jitter 1e-8). Returns (n, 2) with
    n = floor(duration / dt) + 1.
    """
    if duration <= 0 or dt <= 0 or lengthscale <= 0 or variance < 0:
        raise ValueError("duration, dt, lengthscale must be positive and variance non-negative")
    n = int(np.floor(duration / dt)) + 1
    if variance == 0.0:
        return np.zeros((n, 2))
    L = _gp_chol(n, float(dt), float(lengthscale), float(variance))
    z = rng.stream(seed, rng.GP).standard_normal((n, 2))
    return L @ z


def _ped_tick_track(gp_seed: int, duration: float) -> np.ndarray:
    """GP velocity perturbation resampled onto the simulation tick grid.

    The GP is drawn on a coarse 0.25 s grid (dense Cholesky at tick rate
    would be needlessly cubic) and linearly interpolated; with a 2 s
    lengthscale the interpolation error is negligible.
    """
    coarse = sample_gp_track(gp_seed, duration, _GP_SAMPLE_DT)
    t_coarse = np.arange(coarse.shape[0]) * _GP_SAMPLE_DT
    t_fine = np.arange(int(np.floor(duration / DT)) + 1) * DT
    out = np.empty((t_fine.shape[0], 2))
    out[:, 0] = np.interp(t_fine, t_coarse, coarse[:, 0])
    out[:, 1] = np.interp(t_fine, t_coarse, coarse[:, 1])
    return out


def _obstacles_overlap(a: Obstacle, b: Obstacle) -> bool:
    if a.shape == "circle" and b.shape == "circle":
        return np.hypot(a.cx - b.cx, a.cy - b.cy) < a.radius + b.radius
    if a.shape == "box" and b.shape == "box":
        return abs(a.cx - b.cx) < a.hx + b.hx and abs(a.cy - b.cy) < a.hy + b.hy
    c, bx = (a, b) if a.shape == "circle" else (b, a)
    dx = max(abs(c.cx - bx.cx) - bx.hx, 0.0)
    dy = max(abs(c.cy - bx.cy) - bx.hy, 0.0)
    return np.hypot(dx, dy) < c.radius


def _layout_feasible(obstacles: list[Obstacle]) -> bool:
    """True when an inflated-free-space path of width MIN_CLEARANCE_CORRIDOR
    connects the start column to the goal column."""
    inflate = MIN_CLEARANCE_CORRIDOR / 2.0
    nx = int(CORRIDOR_LENGTH / _FEAS_GRID) + 1
    ny = int(CORRIDOR_WIDTH / _FEAS_GRID) + 1
    xs = np.arange(nx) * _FEAS_GRID
    ys = np.arange(ny) * _FEAS_GRID
    X, Y = np.meshgrid(xs, ys, indexing="ij")

    free = (Y >= inflate) & (Y <= CORRIDOR_WIDTH - inflate)
    for o in obstacles:
        if o.shape == "circle":
            d = np.hypot(X - o.cx, Y - o.cy) - o.radius
        else:
            ddx = np.maximum(np.abs(X - o.cx) - o.hx, 0.0)
            ddy = np.maximum(np.abs(Y - o.cy) - o.hy, 0.0)
            d = np.hypot(ddx, ddy)
        free &= d > inflate

    labels, _ = ndimage.label(free)
    start_labels = set(labels[0, :][free[0, :]].tolist())
    goal_labels = set(labels[-1, :][free[-1, :]].tolist())
    return bool(start_labels & goal_labels)


def _sample_obstacle(r: np.random.Generator, oid: int) -> Obstacle:
    shape = "circle" if r.random() < 0.5 else "box"
    cx = r.uniform(4.0, CORRIDOR_LENGTH - 2.0)
    if shape == "circle":
        rad = r.uniform(0.15, 0.6)
        cy = r.uniform(rad + 0.01, CORRIDOR_WIDTH - rad - 0.01)
        return Obstacle("circle", cx, cy, radius=rad, oid=oid)
    hx = r.uniform(0.15, 0.6)
    hy = r.uniform(0.15, 0.6)
    cy = r.uniform(hy + 0.01, CORRIDOR_WIDTH - hy - 0.01)
    return Obstacle("box", cx, cy, hx=hx, hy=hy, oid=oid)


def _point_in_any(obstacles: list[Obstacle], x: float, y: float, margin: float) -> bool:
    for o in obstacles:
        if o.shape == "circle":
            if np.hypot(x - o.cx, y - o.cy) < o.radius + margin:
                return True
        else:
            if abs(x - o.cx) < o.hx + margin and abs(y - o.cy) < o.hy + margin:
                return True
    return False


def generate_scene(seed: int, difficulty: str) -> Scene:
    """Procedurally generate one corridor scene.

    Obstacle count is Poisson around the difficulty mean (5 easy, 15
    medium/hard) clamped to mean +/- 3 (floor 1); easy/medium get 0 or 1
    pedestrian, hard gets 4. Layouts failing the feasibility check are
    regenerated up to 100 times, then the obstacle count is relaxed by one
    and the process repeats.
    """
    if difficulty not in DIFFICULTIES:
        raise ValueError(f"unknown difficulty {difficulty!r}")
    r = rng.stream(seed, rng.SCENE, DIFFICULTIES.index(difficulty))

    mean = 5 if difficulty == EASY else 15
    n_obs = int(np.clip(r.poisson(mean), max(1, mean - 3), mean + 3))
    n_ped = 4 if difficulty == HARD else int(r.integers(0, 2))

    obstacles: list[Obstacle] = []
    relax = 0
    while True:
        target = max(1, n_obs - relax)
        ok = False
        for _ in range(100):
            obstacles = []
            guard = 0
            while len(obstacles) < target and guard < 1000:
                guard += 1
                cand = _sample_obstacle(r, len(obstacles))
                if not any(_obstacles_overlap(cand, o) for o in obstacles):
                    obstacles.append(cand)
            if len(obstacles) == target and _layout_feasible(obstacles):
                ok = True
                break
        if ok:
            break
        relax += 1
        if relax > n_obs:
            raise GenerationError(f"no feasible layout for seed={seed} difficulty={difficulty}")

    n_ticks = int(np.floor((TIME_LIMIT + 10.0) / DT)) + 1
    pedestrians: list[Pedestrian] = []
    for i in range(n_ped):
        for _ in range(200):
            ya = r.uniform(0.5, CORRIDOR_WIDTH - 0.5)
            yb = r.uniform(0.5, CORRIDOR_WIDTH - 0.5)
            wps = np.array([[2.0, ya], [CORRIDOR_LENGTH - 2.0, yb]])
            frac = r.uniform(0.15, 0.9)
            pos = wps[0] + frac * (wps[1] - wps[0])
            if not _point_in_any(obstacles, pos[0], pos[1], PED_RADIUS + 0.05):
                break
        target = int(r.integers(0, 2))
        gp_seed = int(r.integers(0, 2**62))
        track = _ped_tick_track(gp_seed, TIME_LIMIT + 10.0)[:n_ticks]
        pedestrians.append(
            Pedestrian(float(pos[0]), float(pos[1]), waypoints=wps, target=target, gp_seed=gp_seed, gp_track=track)
        )

    return Scene(seed=int(seed), difficulty=difficulty, obstacles=obstacles, pedestrians=pedestrians)


def _advance_pedestrian(p: Pedestrian, tick: int, width: float, length: float):
    wp = p.waypoints[p.target]
    d = wp - np.array([p.x, p.y])
    dist = float(np.hypot(d[0], d[1]))
    if dist < 0.5:
        p.target = 1 - p.target
        wp = p.waypoints[p.target]
        d = wp - np.array([p.x, p.y])
        dist = float(np.hypot(d[0], d[1]))
    nominal = PED_SPEED * d / max(dist, 1e-9)

    k = min(tick, p.gp_track.shape[0] - 1)
    vx = nominal[0] + p.gp_track[k, 0]
    vy = nominal[1] + p.gp_track[k, 1]
    speed = float(np.hypot(vx, vy))
    if speed > PED_SPEED_MAX:
        scale = PED_SPEED_MAX / speed
        vx *= scale
        vy *= scale

    x = p.x + vx * DT
    y = p.y + vy * DT
    lo, hi = p.radius, width - p.radius
    if y < lo:
        y = lo + (lo - y)
        vy = -vy
    elif y > hi:
        y = hi - (y - hi)
        vy = -vy
    p.x = float(np.clip(x, 0.5, length - 0.5))
    p.y = float(np.clip(y, lo, hi))
    p.vx = vx
    p.vy = vy


def _robot_collides(scene: Scene, x: float, y: float) -> bool:
    if y < ROBOT_RADIUS or y > scene.corridor_width - ROBOT_RADIUS:
        return True
    for row in scene.circle_arr:
        if np.hypot(x - row[0], y - row[1]) < ROBOT_RADIUS + row[2]:
            return True
    for row in scene.box_arr:
        dx = max(abs(x - row[0]) - row[2], 0.0)
        dy = max(abs(y - row[1]) - row[3], 0.0)
        if np.hypot(dx, dy) < ROBOT_RADIUS:
            return True
    for p in scene.pedestrians:
        if np.hypot(x - p.x, y - p.y) < ROBOT_RADIUS + p.radius:
            return True
    return False


def mark_terminal(scene: Scene, robot_state, state: str) -> EpisodeStatus:
    """Force a terminal state decided outside the world step (fall, diagnostics)."""
    scene.travel = min(max(scene.travel, float(robot_state.x)), scene.corridor_length)
    scene.state = state
    return scene.status()


def step_world(scene: Scene, robot_state, dt: float = DT) -> tuple[Scene, EpisodeStatus]:
    """Advance pedestrians one tick and update the episode status.

    The robot has already been moved by the plant for this tick. Mutates
    and returns the same Scene; callers that need a snapshot use
    Scene.copy(). Collision is checked before the goal line.
    """
    if scene.state != RUNNING:
        raise RuntimeError("step_world called on a terminated episode")
    scene.tick += 1
    for p in scene.pedestrians:
        _advance_pedestrian(p, scene.tick, scene.corridor_width, scene.corridor_length)

    x, y = float(robot_state.x), float(robot_state.y)
    scene.travel = min(max(scene.travel, x), scene.corridor_length)
    elapsed = scene.tick * dt

    if _robot_collides(scene, x, y):
        scene.state = FAIL_COLLISION
    elif x >= scene.goal_x:
        scene.state = SUCCESS
    elif elapsed > scene.time_limit:
        scene.state = FAIL_TIMEOUT

    return scene, scene.status()


# ---------------------------------------------------------------------------
# Canonical scene serialization: sorted keys, 9 significant digits, so
# archived benchmark scene sets diff cleanly. Dynamic state is archived at
# spawn; GP tracks regenerate from the stored per-pedestrian seeds.

def _c9(x: float) -> float:
    return float(format(float(x), ".9g"))


def scene_to_json(scene: Scene) -> str:
    obs = [
        {
            "shape": o.shape,
            "cx": _c9(o.cx),
            "cy": _c9(o.cy),
            "radius": _c9(o.radius),
            "hx": _c9(o.hx),
            "hy": _c9(o.hy),
            "oid": o.oid,
        }
        for o in scene.obstacles
    ]
    peds = [
        {
            "x": _c9(p.x),
            "y": _c9(p.y),
            "radius": _c9(p.radius),
            "waypoints": [[_c9(v) for v in row] for row in p.waypoints.tolist()],
            "target": p.target,
            "gp_seed": p.gp_seed,
        }
        for p in scene.pedestrians
    ]
    doc = {
        "seed": scene.seed,
        "difficulty": scene.difficulty,
        "corridor_width": _c9(scene.corridor_width),
        "corridor_length": _c9(scene.corridor_length),
        "goal_x": _c9(scene.goal_x),
        "time_limit": _c9(scene.time_limit),
        "obstacles": obs,
        "pedestrians": peds,
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def scene_from_json(text: str) -> Scene:
    doc = json.loads(text)
    obstacles = [
        Obstacle(o["shape"], o["cx"], o["cy"], radius=o["radius"], hx=o["hx"], hy=o["hy"], oid=o["oid"])
        for o in doc["obstacles"]
    ]
    n_ticks = int(np.floor((doc["time_limit"] + 10.0) / DT)) + 1
    peds = []
    for p in doc["pedestrians"]:
        track = _ped_tick_track(p["gp_seed"], doc["time_limit"] + 10.0)[:n_ticks]
        peds.append(
            Pedestrian(
                p["x"],
                p["y"],
                radius=p["radius"],
                waypoints=np.array(p["waypoints"], dtype=np.float64),
                target=p["target"],
                gp_seed=p["gp_seed"],
                gp_track=track,
            )
        )
    return Scene(
        seed=doc["seed"],
        difficulty=doc["difficulty"],
        obstacles=obstacles,
        pedestrians=peds,
        corridor_width=doc["corridor_width"],
        corridor_length=doc["corridor_length"],
        goal_x=doc["goal_x"],
        time_limit=doc["time_limit"],
    )
