"""Composition of the navigation policy over the gait policy.

The base tick is 38 Hz. The navigator runs every NAV_EVERY = 4 ticks
(9.5 Hz, the closest integer divisor of the tick rate) and its command is
held between invocations. The gait policy runs every tick on the flattened
history buffer B_t of the T+1 most recent (command, proprio, prev-action)
tuples.

Commands and actions are quantized to float32 at the hierarchy boundary,
matching the network substrate precision; recorded trajectories therefore
round-trip losslessly through the 32-bit on-disk format.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from . import plant as plant_mod
from . import world as world_mod
from .plant import DT, Extrinsics, GaitAction, IdealPlant, Plant, RobotState, make_spawn_state, sample_extrinsics
from .sensing import Observation, observe

NAV_EVERY = 4
T_HISTORY = 15
Q_DIM = 6
FEATURE_DIM = (T_HISTORY + 1) * (2 + Q_DIM + 2)  # 160

V_CMD_MAX = 1.0
W_CMD_MAX = 1.5

_TRAJ_MAGIC = b"CLTRJ001"


def _f32(x: float) -> float:
    return float(np.float32(x))


@dataclass
class Command:
    v_cmd: float = 0.0
    w_cmd: float = 0.0

    def clipped(self) -> "Command":
        return Command(_f32(np.clip(self.v_cmd, 0.0, V_CMD_MAX)), _f32(np.clip(self.w_cmd, -W_CMD_MAX, W_CMD_MAX)))

    def as_array(self) -> np.ndarray:
        return np.array([self.v_cmd, self.w_cmd])


class HistoryBuffer:
    """Ring of the T+1 most recent (u, q-slice, a) tuples, zero-filled at start."""

    def __init__(self, T: int = T_HISTORY):
        self.T = T
        self._buf = np.zeros((T + 1, 2 + Q_DIM + 2), dtype=np.float64)

    def push(self, u: Command, q: np.ndarray, a: GaitAction) -> "HistoryBuffer":
        self._buf[:-1] = self._buf[1:]
        self._buf[-1, 0] = u.v_cmd
        self._buf[-1, 1] = u.w_cmd
        self._buf[-1, 2 : 2 + Q_DIM] = q
        self._buf[-1, 2 + Q_DIM] = a.a_f
        self._buf[-1, 2 + Q_DIM + 1] = a.a_t
        return self

    def features(self) -> np.ndarray:
        return self._buf.reshape(-1).copy()

    def reset(self):
        self._buf[:] = 0.0


def push_history(buffer: HistoryBuffer, u: Command, q: np.ndarray, a: GaitAction) -> HistoryBuffer:
    return buffer.push(u, q, a)


def _reset_policy(policy):
    reset = getattr(policy, "reset", None)
    if callable(reset):
        reset()


@dataclass
class Trajectory:
    scene_seed: int
    difficulty: str
    ext_seed: int | None  # None -> nominal extrinsics
    episode_seed: int
    ideal: bool
    status: str
    states: np.ndarray  # (n_ticks + 1, 7) including spawn row
    cmds: np.ndarray  # (n_ticks, 2) held command per tick
    actions: np.ndarray  # (n_ticks, 2)
    final_state: np.ndarray = field(default_factory=lambda: np.zeros(7))  # full-precision

    @property
    def n_ticks(self) -> int:
        return self.cmds.shape[0]

    def save(self, path):
        header = {
            "scene_seed": self.scene_seed,
            "difficulty": self.difficulty,
            "ext_seed": self.ext_seed,
            "episode_seed": self.episode_seed,
            "ideal": self.ideal,
            "status": self.status,
            "n_ticks": int(self.n_ticks),
            "final_state": [repr(float(v)) for v in self.final_state],
            "layout": [["states", [int(self.n_ticks) + 1, 7]], ["cmds", [int(self.n_ticks), 2]], ["actions", [int(self.n_ticks), 2]]],
            "dtype": "<f4",
        }
        hb = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
        with open(path, "wb") as f:
            f.write(_TRAJ_MAGIC)
            f.write(struct.pack("<I", len(hb)))
            f.write(hb)
            for arr in (self.states, self.cmds, self.actions):
                f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())

    @staticmethod
    def load(path) -> "Trajectory":
        with open(path, "rb") as f:
            magic = f.read(len(_TRAJ_MAGIC))
            if magic != _TRAJ_MAGIC:
                raise ValueError(f"not a trajectory file: bad magic {magic!r}")
            (hlen,) = struct.unpack("<I", f.read(4))
            header = json.loads(f.read(hlen).decode())
            blocks = {}
            for name, shape in header["layout"]:
                n = int(np.prod(shape))
                blocks[name] = np.frombuffer(f.read(n * 4), dtype="<f4").reshape(shape).astype(np.float64)
        return Trajectory(
            scene_seed=header["scene_seed"],
            difficulty=header["difficulty"],
            ext_seed=header["ext_seed"],
            episode_seed=header["episode_seed"],
            ideal=header["ideal"],
            status=header["status"],
            states=blocks["states"],
            cmds=blocks["cmds"],
            actions=blocks["actions"],
            final_state=np.array([float(s) for s in header["final_state"]]),
        )

    def digest(self) -> str:
        h = hashlib.sha256()
        for arr in (self.states, self.cmds, self.actions):
            h.update(np.ascontiguousarray(arr, dtype="<f4").tobytes())
        h.update(self.status.encode())
        return h.hexdigest()


def _make_plant(scene, ext_seed: int | None, episode_seed: int, ideal: bool):
    spawn = make_spawn_state(scene)
    if ideal:
        return IdealPlant(state=spawn)
    ext = sample_extrinsics(ext_seed, duration=scene.time_limit + 5.0) if ext_seed is not None else Extrinsics()
    return Plant(ext, seed=episode_seed, state=spawn)


def run_episode(
    scene,
    nav_policy,
    gait_policy=None,
    *,
    ext_seed: int | None = None,
    episode_seed: int = 0,
    ideal: bool = False,
    recorder=None,
    collect_trajectory: bool = True,
) -> tuple[world_mod.EpisodeStatus, Trajectory | None]:
    """Run one full episode of the navigator over the gait in `scene` (mutated).

    nav_policy: callable Observation -> Command (optional .reset()).
    Privileged baselines (planners that consume ground-truth scene state)
    set .privileged = True and are called as nav_policy(scene, robot_state)
    instead; the recorder still receives the sensor-side Observation.
    gait_policy: callable B_t features (160,) -> GaitAction; ignored when
    ideal=True (commands integrate exactly). recorder, when given, receives
    (t, Observation, Command) at every navigation tick.
    """
    if not ideal and gait_policy is None:
        raise ValueError("gait_policy required unless ideal=True")
    _reset_policy(nav_policy)
    if gait_policy is not None:
        _reset_policy(gait_policy)

    plant = _make_plant(scene, ext_seed, episode_seed, ideal)
    buf = HistoryBuffer()
    u = Command(0.0, 0.0)
    a_prev = GaitAction(0.0, 0.0)
    states = [plant.state.as_array()] if collect_trajectory else []
    cmds: list[np.ndarray] = []
    acts: list[np.ndarray] = []
    status = scene.status()

    privileged = bool(getattr(nav_policy, "privileged", False))
    tick = 0
    while scene.state == world_mod.RUNNING:
        if tick % NAV_EVERY == 0:
            obs = observe(scene, plant.state)
            raw = nav_policy(scene, plant.state) if privileged else nav_policy(obs)
            if not (np.isfinite(raw.v_cmd) and np.isfinite(raw.w_cmd)):
                status = world_mod.mark_terminal(scene, plant.state, world_mod.FAIL_NONFINITE)
                break
            u = raw.clipped()
            if recorder is not None:
                recorder(tick * DT, obs, u)

        if ideal:
            a = GaitAction(0.0, 0.0)
            plant.step_command(u.v_cmd, u.w_cmd)
        else:
            buf.push(u, plant.state.proprio(), a_prev)
            raw_a = gait_policy(buf.features())
            if not (np.isfinite(raw_a.a_f) and np.isfinite(raw_a.a_t)):
                status = world_mod.mark_terminal(scene, plant.state, world_mod.FAIL_NONFINITE)
                break
            a = raw_a.clipped()
            plant.step(a)
        a_prev = a
        tick += 1

        if collect_trajectory:
            states.append(plant.state.as_array())
        cmds.append(u.as_array())
        acts.append(a.as_array())

        if plant.fallen:
            status = world_mod.mark_terminal(scene, plant.state, world_mod.FAIL_FALL)
            break
        _, status = world_mod.step_world(scene, plant.state)

    traj = None
    if collect_trajectory:
        traj = Trajectory(
            scene_seed=scene.seed,
            difficulty=scene.difficulty,
            ext_seed=ext_seed,
            episode_seed=episode_seed,
            ideal=ideal,
            status=status.state,
            states=np.array(states).reshape(-1, 7),
            cmds=np.array(cmds).reshape(-1, 2),
            actions=np.array(acts).reshape(-1, 2),
            final_state=plant.state.as_array(),
        )
    return status, traj


def replay_trajectory(traj: Trajectory, gait_policy=None) -> tuple[world_mod.EpisodeStatus, RobotState]:
    """Re-simulate a recorded episode from its seeds and recorded streams.

    Ideal-plant recordings (teleop sessions) replay from the command
    stream; gait recordings replay from the recorded per-tick actions with
    the identical extrinsics and noise stream. Either way the simulation is
    bit-reproducible, so status and final pose must match the recording.
    """
    scene = world_mod.generate_scene(traj.scene_seed, traj.difficulty)
    plant = _make_plant(scene, traj.ext_seed, traj.episode_seed, traj.ideal)
    status = scene.status()
    for k in range(traj.n_ticks):
        if traj.ideal:
            plant.step_command(float(traj.cmds[k, 0]), float(traj.cmds[k, 1]))
        else:
            plant.step(GaitAction(float(traj.actions[k, 0]), float(traj.actions[k, 1])))
        if plant.fallen:
            status = world_mod.mark_terminal(scene, plant.state, world_mod.FAIL_FALL)
            break
        _, status = world_mod.step_world(scene, plant.state)
        if status.terminal:
            break
    return status, plant.state


class ConstantNav:
    """Navigator emitting one fixed command forever (tests, sanity runs)."""

    def __init__(self, v: float, w: float = 0.0):
        self.u = Command(v, w)

    def __call__(self, obs: Observation) -> Command:
        return self.u
