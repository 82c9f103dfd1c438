"""Gait-proxy plant: a planar body with randomized actuation, latency, slip,
sensor-free perturbations, stepped at 38 Hz.

State is (x, y, theta, v, omega, v_lat, instability). Forward and turn
efforts in [-1, 1] drive first-order velocity channels; a slip channel
couples |omega|*v into lateral drift; an instability accumulator tracks
recent velocity-channel transients. A fall is declared when instability
exceeds 1.5 or |v_lat| exceeds 0.6 m/s.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

from . import rng
from ._kernels import plant_step_batch

DT = 1.0 / 38.0
V_MAX = 1.5
W_MAX = 3.0
FALL_INSTABILITY = 1.5
FALL_VLAT = 0.6
FORCE_V = 2.0
FORCE_W = 4.0
SLIP_DECAY = 2.0
PUSH_RATE = 0.1  # events per second
PUSH_MAX = 0.3  # m/s velocity kick

GAIN_RANGE = (0.6, 1.4)
DAMP_RANGE = (0.7, 1.3)
LATENCY_SET = (0, 1, 2, 3)
NOISE_STD_MAX = 0.02
SLIP_RANGE = (0.0, 0.5)


@dataclass
class RobotState:
    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0
    v: float = 0.0
    omega: float = 0.0
    v_lat: float = 0.0
    instability: float = 0.0

    @property
    def fallen(self) -> bool:
        return self.instability > FALL_INSTABILITY or abs(self.v_lat) > FALL_VLAT

    def proprio(self) -> np.ndarray:
        """The q slice entering the history buffer."""
        return np.array(
            [self.v, self.omega, self.v_lat, self.instability, np.sin(self.theta), np.cos(self.theta)],
            dtype=np.float64,
        )

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta, self.v, self.omega, self.v_lat, self.instability])

    @staticmethod
    def from_array(a) -> "RobotState":
        return RobotState(*(float(v) for v in a))


@dataclass
class GaitAction:
    a_f: float = 0.0
    a_t: float = 0.0

    def clipped(self) -> "GaitAction":
        # float32 quantization keeps recorded actions lossless on disk
        return GaitAction(float(np.float32(np.clip(self.a_f, -1.0, 1.0))), float(np.float32(np.clip(self.a_t, -1.0, 1.0))))

    def as_array(self) -> np.ndarray:
        return np.array([self.a_f, self.a_t])


@dataclass
class Extrinsics:
    gain_v: float = 1.0
    gain_w: float = 1.0
    damp_v: float = 1.0
    damp_w: float = 1.0
    latency: int = 0
    noise_std: np.ndarray = field(default_factory=lambda: np.zeros(3))  # (v, omega, v_lat) channels
    slip_coeff: float = 0.0
    push_schedule: list = field(default_factory=list)  # [(time_s, (dv, dv_lat)), ...]

    def ext_row(self) -> np.ndarray:
        return np.array([self.gain_v, self.gain_w, self.damp_v, self.damp_w, self.slip_coeff])


def nominal_extrinsics() -> Extrinsics:
    return Extrinsics()


def sample_extrinsics(seed: int, duration: float = 120.0) -> Extrinsics:
    """Uniform draws over the randomization ranges, plus a Poisson push schedule."""
    r = rng.stream(seed, rng.EXTRINSICS)
    ext = Extrinsics(
        gain_v=float(r.uniform(*GAIN_RANGE)),
        gain_w=float(r.uniform(*GAIN_RANGE)),
        damp_v=float(r.uniform(*DAMP_RANGE)),
        damp_w=float(r.uniform(*DAMP_RANGE)),
        latency=int(r.choice(LATENCY_SET)),
        noise_std=r.uniform(0.0, NOISE_STD_MAX, size=3),
        slip_coeff=float(r.uniform(*SLIP_RANGE)),
    )
    n_push = int(r.poisson(PUSH_RATE * duration))
    times = np.sort(r.uniform(0.0, duration, size=n_push))
    for t in times:
        mag = float(r.uniform(0.0, PUSH_MAX))
        ang = float(r.uniform(0.0, 2.0 * np.pi))
        ext.push_schedule.append((float(t), (mag * np.cos(ang), mag * np.sin(ang))))
    return ext


def step_plant(state: RobotState, action: GaitAction, ext: Extrinsics, dt: float = DT, noise=(0.0, 0.0, 0.0), push=(0.0, 0.0)) -> RobotState:
    """One noise-and-push-explicit plant step (latency handled by Plant).

    Semi-implicit Euler: velocity channels update first, then the pose
    integrates with the new velocities. `action` is the delayed action
    already popped from the latency queue.
    """
    a = action.clipped()
    out = plant_step_batch(
        state.as_array()[None, :],
        np.array([[a.a_f, a.a_t]]),
        ext.ext_row()[None, :],
        np.asarray(noise, dtype=np.float64)[None, :],
        np.asarray(push, dtype=np.float64)[None, :],
        dt,
    )
    return RobotState.from_array(out[0])


class Plant:
    """Stateful wrapper owning the latency queue, noise stream, and pushes.

    Noise draws advance once per step regardless of extrinsics, so a
    zero-noise plant and a noisy plant consume the stream identically.
    """

    def __init__(self, ext: Extrinsics, seed: int = 0, state: RobotState | None = None, dt: float = DT):
        self.ext = ext
        self.dt = dt
        self.state = state if state is not None else RobotState()
        self._noise_rng = rng.stream(seed, rng.ROLLOUT)
        self.tick = 0
        self._queue = deque([GaitAction(0.0, 0.0)] * ext.latency)
        self._pushes = sorted(ext.push_schedule)
        self._push_i = 0

    def step(self, action: GaitAction) -> RobotState:
        self._queue.append(action.clipped())
        delayed = self._queue.popleft()

        z = self._noise_rng.standard_normal(3)
        noise = z * self.ext.noise_std

        t_next = (self.tick + 1) * self.dt
        push = np.zeros(2)
        while self._push_i < len(self._pushes) and self._pushes[self._push_i][0] <= t_next:
            push += np.asarray(self._pushes[self._push_i][1])
            self._push_i += 1

        self.state = step_plant(self.state, delayed, self.ext, self.dt, noise=noise, push=push)
        self.tick += 1
        return self.state

    @property
    def fallen(self) -> bool:
        return self.state.fallen


class IdealPlant:
    """Exact command integrator: velocities equal the command instantly.

    The harness sanity ceiling and the teleop cart both ride on this; it
    never slips and never falls.
    """

    def __init__(self, state: RobotState | None = None, dt: float = DT):
        self.state = state if state is not None else RobotState()
        self.dt = dt
        self.tick = 0

    def step_command(self, v_cmd: float, w_cmd: float) -> RobotState:
        s = self.state
        th = s.theta + w_cmd * self.dt
        x = s.x + v_cmd * np.cos(th) * self.dt
        y = s.y + v_cmd * np.sin(th) * self.dt
        self.state = RobotState(float(x), float(y), float(th), float(v_cmd), float(w_cmd), 0.0, 0.0)
        self.tick += 1
        return self.state

    @property
    def fallen(self) -> bool:
        return False


def make_spawn_state(scene) -> RobotState:
    return RobotState(x=0.0, y=scene.corridor_width / 2.0, theta=0.0)


def nominal_state_like(state: RobotState) -> RobotState:
    return replace(state)
